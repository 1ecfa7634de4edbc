from django.apps import AppConfig


class OracleConfig(AppConfig):
    name = "apps.oracle"
    verbose_name = "θ grid-search oracle"
