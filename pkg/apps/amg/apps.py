from django.apps import AppConfig


class AmgConfig(AppConfig):
    name = "apps.amg"
    verbose_name = "Algebraic multigrid"
