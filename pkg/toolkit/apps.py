from django.apps import AppConfig


class ToolkitAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'toolkit'
    verbose_name = 'Command-line toolkit'
