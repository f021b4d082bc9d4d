from django.apps import AppConfig


class EvaluationConfig(AppConfig):
    name = 'evaluation'
    verbose_name = 'PSNR evaluation protocol and ablation sweeps'
