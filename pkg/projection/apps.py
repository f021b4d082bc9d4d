from django.apps import AppConfig


class ProjectionConfig(AppConfig):
    name = 'projection'
    verbose_name = 'Zero-mean L2-ball projection'
