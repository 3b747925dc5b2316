from .metrics import bleu_score, corpus_text_metrics, metric_tokenize, rouge_l_score, success_rate
from .report import (
    MetricsReport,
    ablation_report,
    check_ablation_pair,
    evaluate_checkpoint,
    evaluate_network,
    format_table,
    instruction_following_accuracy,
)
from .rollout import MAX_STEPS, PromptFeatureCache, RolloutResult, replay_episode, rollout_episode, rollout_policy

__all__ = [
    "bleu_score",
    "corpus_text_metrics",
    "metric_tokenize",
    "rouge_l_score",
    "success_rate",
    "MetricsReport",
    "ablation_report",
    "check_ablation_pair",
    "evaluate_checkpoint",
    "evaluate_network",
    "format_table",
    "instruction_following_accuracy",
    "MAX_STEPS",
    "PromptFeatureCache",
    "RolloutResult",
    "replay_episode",
    "rollout_episode",
    "rollout_policy",
]
