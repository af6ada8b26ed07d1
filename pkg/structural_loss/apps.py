from django.apps import AppConfig


class StructuralLossConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "structural_loss"
    verbose_name = "Structural similarity loss lab"
