from django.db.models import CharField, JSONField, Manager, TextField
from model_utils import Choices
from model_utils.models import StatusModel, TimeStampedModel


class EstimationRunManager(Manager):
    def start(self, command, config_hash, output_dir=''):
        return self.create(command=command, config_hash=config_hash, output_dir=output_dir,
                           status=self.model.STATUS.running)

    def for_config(self, config_hash):
        return self.filter(config_hash=config_hash)


class EstimationRun(TimeStampedModel, StatusModel):
    STATUS = Choices('running', 'succeeded', 'failed')

    objects = EstimationRunManager()

    command = CharField(max_length=32, verbose_name="Management command")
    config_hash = CharField(max_length=64, db_index=True, verbose_name="Configuration hash")
    output_dir = CharField(max_length=1024, blank=True, default='')
    warnings = JSONField(default=list, blank=True)
    message = TextField(blank=True, default='')

    class Meta(object):
        ordering = ('-created',)

    def succeed(self, warnings=()):
        self.status = self.STATUS.succeeded
        self.warnings = list(warnings)
        self.save(update_fields=['status', 'status_changed', 'warnings', 'modified'])

    def fail(self, message):
        self.status = self.STATUS.failed
        self.message = str(message)
        self.save(update_fields=['status', 'status_changed', 'message', 'modified'])

    def __str__(self):
        return u"{0} {1} ({2})".format(self.command, self.config_hash[:12], self.status)
