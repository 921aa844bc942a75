"""Gaze-driven assistive pipeline: perception, intent recognition, LLM
inference, gaze confirmation, and validated plan execution in simulation."""

from .confirmation import (
    AllRejected,
    ConfirmationState,
    Phase,
    Region,
    RegionLayout,
    classify_region,
    run_confirmation,
)
from .evaluation import (
    CVReport,
    ScriptedSession,
    StageReport,
    accuracy,
    assemble_windows,
    five_fold_by_trial,
    fixation_baseline,
    loso,
    run_cross_validation,
    run_system_eval,
)
from .features import FeatureConfig, FeatureWindow, WindowBatch, cut_windows, gaze_ratio, half_diagonal
from .intentnet import IntentNetClassifier, ModelConfig, TrainConfig, gradient_check
from .llm import (
    ChatPrompt,
    GazedObjectSequence,
    HttpLLMClient,
    IntentProposal,
    MockLLMClient,
    build_prompt,
    infer_intentions,
)
from .perception import (
    AlignedGaze,
    Box,
    Detection,
    FrameRecord,
    GazeSample,
    SceneGeometry,
    align_gaze_to_frames,
    mock_detect,
    track_objects,
)
from .planner import ActionPlan, ActionStep, ExecutionPolicy, execute, plan, validate
from .session import (
    SessionConfig,
    SessionEngine,
    SessionEvent,
    SessionPhase,
    audit_log_safety,
    replay,
    run_session,
)
from .synth import SyntheticProfile, generate_dataset, load_dataset, save_dataset
from .world import WorldState, load_fixture, save_fixture

__version__ = "0.1.0"
