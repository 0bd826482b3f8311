from django.apps import AppConfig


class MedqteConfig(AppConfig):
    name = 'django_medqte'
    verbose_name = 'Mediation quantile treatment effects'
    default_auto_field = 'django.db.models.BigAutoField'
