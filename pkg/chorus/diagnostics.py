from __future__ import annotations

import difflib
from dataclasses import dataclass
from typing import Iterable


HINT_LINES = {
    "invalid_logits": "Logits must be finite. A NaN or inf upstream usually means training blew up.",
    "invalid_probabilities": "Probabilities must lie in [0, 1] and sum to 1.",
    "class_count_mismatch": "Both distributions must cover the same classes.",
    "dimension_mismatch": "Input width does not match the network architecture.",
    "invalid_architecture": "Layer sizes must be positive and there must be at least two classes.",
    "diverged": "Training produced non-finite values. Lower the learning rate.",
    "shape_mismatch": "Gradients and parameters must have the same layer shapes.",
    "too_few_teachers": "Ensembles need at least two teachers.",
    "negative_loss": "Task losses are cross-entropies and can never be negative.",
    "labels_required": "Labeled distillation needs the teachers' task losses on the true label.",
    "empty_batches": "At least one of the labeled and unlabeled batches must hold samples.",
    "invalid_lambda": "Lambda scales the disagreement term and must be non-negative.",
    "missing_file": "Check the path; the file was not found.",
    "malformed_row": "Every row needs one numeric value per feature column and a label.",
    "unknown_column": "The column was not found in the CSV header.",
    "invalid_label": "Labels must be non-negative class indices or class names seen in the training file.",
    "invalid_input": "Inputs must be finite numbers; check the feature columns for NaN or inf.",
    "invalid_fraction": "Fractions must lie in [0, 1] and add up to at most 1.",
    "empty_source": "There is nothing to split; the source dataset is empty.",
    "invalid_mixture": "Means need one entry per class, all of the same dimension, and cov_scale > 0.",
    "no_test_data": "Give a test CSV or a positive test_fraction.",
    "checkpoint_version": "The checkpoint was written by an incompatible format version.",
    "checkpoint_malformed": "The checkpoint file is not a valid checkpoint document.",
    "checkpoint_shape": "Stored parameters do not fit the stored architecture.",
    "unknown_config_key": "Only documented RunConfig keys are accepted.",
    "invalid_config_value": "The value has the wrong type or is out of range.",
    "config_format": "Config files must be .toml or .json.",
    "unknown_method": "Known methods: single, ensemble, kd_labeled, kd_unlabeled, unikd.",
    "invalid_sweep": "The lambda grid must be non-empty and non-negative.",
}


def hint_line(code: str) -> str:
    return HINT_LINES.get(code, "Something went wrong; see the message above.")


def did_you_mean(name: str, candidates: Iterable[str]) -> str:
    matches = difflib.get_close_matches(name, sorted(set(candidates)), n=1, cutoff=0.72)
    return f" Did you mean `{matches[0]}`?" if matches else ""


@dataclass
class ChorusError(Exception):
    code: str
    technical: str
    row: int | None = None
    where: str | None = None

    @property
    def hint(self) -> str:
        return hint_line(self.code)

    def location(self) -> str:
        parts: list[str] = []
        if self.where:
            parts.append(self.where)
        if self.row is not None:
            parts.append(f"row {self.row}")
        return ", ".join(parts)

    def pretty(self, source_name: str | None = None) -> str:
        prefix = f"{source_name}: " if source_name else ""
        loc = self.location()
        loc_text = f" ({loc})" if loc else ""
        return f"{prefix}[{self.code}] {self.technical}{loc_text}\n  {self.hint}"

    def __str__(self) -> str:
        return self.pretty()


@dataclass
class ChorusAggregateError(Exception):
    errors: list[ChorusError]

    def pretty(self, source_name: str | None = None) -> str:
        return "\n".join(err.pretty(source_name) for err in self.errors)

    def __str__(self) -> str:
        return self.pretty()
