"""Multi-hop temporal KG question answering with tree-group RL training."""

from .env import (
    Action,
    AnswerValue,
    Question,
    ReasoningState,
    UNKNOWN,
    apply_hop,
    candidate_actions,
    initial_state,
    load_questions,
    terminal_reward,
)
from .errors import (
    ConfigError,
    DataError,
    IntegrityError,
    InvalidActionError,
    ProtocolError,
    RemotePolicyError,
    RemoteUnavailableError,
    TgrpoError,
)
from .evaluation import EvalReport, RankedAnswers, evaluate, hits_at_k, rank_answers
from .graph import Fact, TemporalKG, TimeInterval, load_graph
from .policy import (
    DeskPolicy,
    PolicyParams,
    distribution,
    featurize,
    load_checkpoint,
    log_prob_and_grad,
    sample,
    save_checkpoint,
)
from .remote import RemotePolicy, RemotePolicyEndpoint, remote_act
from .retrieval import PruneConfig, prune_top_p, score_fact
from .sampling import (
    SftDataset,
    Trajectory,
    TrajectorySet,
    build_sft_dataset,
    filter_positive,
    sample_multi,
    sample_trajectory,
    train_sft,
)
from .synth import GeneratedCase, SynthSpec, generate
from .training import (
    GroupBuffer,
    GroupMember,
    GroupRecord,
    GrpoConfig,
    SearchConfig,
    compute_advantages,
    grpo_objective,
    searching,
    train_grpo_flat,
    train_tgrpo,
    verify_propagation,
)

__version__ = "0.1.0"
