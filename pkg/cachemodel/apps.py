from django.apps import AppConfig


class CachemodelConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'cachemodel'
    verbose_name = 'Cache-aware estimates'
