from django.apps import AppConfig


class ModelConfig(AppConfig):
    name = "apps.model"
    label = "theta_model"
