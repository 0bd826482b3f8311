from django.contrib import admin

from .models import EstimationRun


@admin.register(EstimationRun)
class EstimationRunAdmin(admin.ModelAdmin):
    list_display = ('command', 'status', 'config_hash', 'output_dir', 'created')
    list_filter = ('command', 'status')
    search_fields = ('config_hash', 'output_dir')
    readonly_fields = ('warnings', 'message')
