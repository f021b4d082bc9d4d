from django.apps import AppConfig


class TensorCoreConfig(AppConfig):
    name = 'tensorcore'
    verbose_name = 'Tensor core and reverse-mode gradients'
