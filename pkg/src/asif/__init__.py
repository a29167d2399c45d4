"""Block-construction agents that act on an edited copy of their scene graph."""

from .kinds import ObjectKind, TaskKind
from .scene_graph import SceneGraph, SceneNode
from .tasks import SceneConfig, generate_scene, reset, step

__version__ = "0.1.0"

__all__ = ["ObjectKind", "SceneConfig", "SceneGraph", "SceneNode", "TaskKind", "generate_scene",
           "reset", "step", "__version__"]
