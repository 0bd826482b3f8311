# -*- coding: utf-8 -*-
from django.db import migrations, models
import django.utils.timezone
import model_utils.fields


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EstimationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created', model_utils.fields.AutoCreatedField(default=django.utils.timezone.now, editable=False,
                                                                verbose_name='created')),
                ('modified', model_utils.fields.AutoLastModifiedField(default=django.utils.timezone.now,
                                                                      editable=False, verbose_name='modified')),
                ('status', model_utils.fields.StatusField(choices=[('running', 'running'),
                                                                   ('succeeded', 'succeeded'),
                                                                   ('failed', 'failed')],
                                                          default='running', max_length=100,
                                                          no_check_for_status=True, verbose_name='status')),
                ('status_changed', model_utils.fields.MonitorField(default=django.utils.timezone.now,
                                                                   monitor='status', verbose_name='status changed')),
                ('command', models.CharField(max_length=32, verbose_name='Management command')),
                ('config_hash', models.CharField(db_index=True, max_length=64, verbose_name='Configuration hash')),
                ('output_dir', models.CharField(blank=True, default='', max_length=1024)),
                ('warnings', models.JSONField(blank=True, default=list)),
                ('message', models.TextField(blank=True, default='')),
            ],
            options={
                'ordering': ('-created',),
            },
        ),
    ]
