from django.apps import AppConfig


class ModelgenConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'modelgen'
    verbose_name = 'Performance model generation'
