from django.apps import AppConfig


class CliConfig(AppConfig):
    name = "apps.cli"

    def ready(self):
        from .services.validation import check_pipeline_settings

        check_pipeline_settings()
