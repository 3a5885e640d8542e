"""Multi-label recognition head on precomputed features: quaternion semantic
synthesis, gated dual-modal alignment, soft regional aggregation, and a
training/ablation harness with ranking metrics."""

from .aggregation import (
    LossConfig,
    Prediction,
    asymmetric_loss,
    average_aggregate,
    global_predict,
    hard_aggregate,
    regional_logits,
    soft_aggregate,
    total_loss,
)
from .alignments import CmaParams, GateParams, GdmaParams, cma, gate, gdma_apply, gdma_s2v, gdma_v2s
from .autodiff import DiffNode, backward, softmax_rows
from .data import FeatureBundle, SyntheticDataset, SyntheticSpec, gen_synthetic
from .errors import ConfigError, DataFormatError, NumericsError
from .gradcheck import finite_difference_gradient
from .layers import MlpParams, mlp_apply
from .metrics import EvalReport, EvalTable, average_precision, evaluate, prf1
from .model import ModelConfig, SspaParams, forward, init_params
from .optim import EmaState, OptimizerState, adamw_step, cosine_lr, ema_update
from .prompting import (
    CategoryDescription,
    LlmPromptTemplate,
    PromptBank,
    assemble_description,
    cap_forward,
    load_label_semantics,
    render_llm_prompt,
    toy_text_encode,
)
from .quaternion import (
    QsmParams,
    QuaternionLinearParams,
    hamilton_block_matrix,
    qsm_forward,
    quaternion_linear,
    quaternion_split,
)
from .training import TrainConfig, run_ablation, train

__version__ = "0.1.0"
