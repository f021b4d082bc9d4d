from django.apps import AppConfig


class AttackAppConfig(AppConfig):
    name = 'attack'
    verbose_name = 'Zero-mean observation attack'
