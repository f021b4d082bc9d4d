from django.apps import AppConfig


class DenoiserConfig(AppConfig):
    name = 'denoiser'
    verbose_name = 'Residual convolutional denoiser'
