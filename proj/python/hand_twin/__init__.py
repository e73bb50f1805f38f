"""Python bindings for the hand digital twin."""

from ._core import (
    COMMAND_NAMES,
    Hand,
    HandError,
    Twin,
    friction_angle,
    lead_angle,
    opposition,
    rom,
    sample_workspace,
    self_lock,
    solve_ik,
    tips,
    wrist_envelope,
    wrist_fk,
    wrist_ik,
)

__all__ = [
    "COMMAND_NAMES",
    "Hand",
    "HandError",
    "Twin",
    "friction_angle",
    "lead_angle",
    "opposition",
    "rom",
    "sample_workspace",
    "self_lock",
    "solve_ik",
    "tips",
    "wrist_envelope",
    "wrist_fk",
    "wrist_ik",
]
