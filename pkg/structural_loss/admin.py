from __future__ import annotations

from typing import Any, Dict, List, Optional

from django.contrib import admin
from django.utils.html import format_html
from django.utils.safestring import SafeString

from .choices import RunStatus
from .models import AblationResult, TrainingRun


@admin.register(TrainingRun)
class TrainingRunAdmin(admin.ModelAdmin):
    list_display: List[str] = ["loss_kind", "seed", "colored_status", "final_loss", "val_miou", "val_pixel_accuracy", "created_at"]
    list_filter: List[str] = ["loss_kind", "status", "created_at"]
    search_fields: List[str] = ["output_dir", "error_message"]
    readonly_fields: List[str] = ["created_at", "updated_at"]

    fieldsets: tuple[tuple[Optional[str], Dict[str, Any]], ...] = (
        (None, {"fields": ("loss_kind", "seed", "status", "output_dir")}),
        ("Results", {"fields": ("final_loss", "val_miou", "val_pixel_accuracy", "error_message")}),
        ("Configuration", {"fields": ("config",), "classes": ("collapse",)}),
        ("Timestamps", {"fields": ("created_at", "updated_at"), "classes": ("collapse",)}),
    )

    def colored_status(self, obj: TrainingRun) -> SafeString:
        color: str = {RunStatus.COMPLETED: "green", RunStatus.FAILED: "red"}.get(obj.status, "orange")
        return format_html('<span style="color: {};">{}</span>', color, obj.get_status_display())

    colored_status.short_description = "Status"


@admin.register(AblationResult)
class AblationResultAdmin(admin.ModelAdmin):
    list_display: List[str] = ["axis", "value", "seed", "val_miou", "mean_hard_proportion", "run"]
    list_filter: List[str] = ["axis", "created_at"]
    search_fields: List[str] = ["value"]
    readonly_fields: List[str] = ["created_at", "updated_at"]
