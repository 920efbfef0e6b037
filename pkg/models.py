# models.py
from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Column = Union[int, str]

PRESET_NAMES = ("dbpedia", "argmine_task_a", "argmine_task_c", "churn", "custom", "tiny")
Architecture = Literal["ecga", "cga", "cnn_bigru", "bigru_att", "cnn"]


def _labels_as_text(value: Any) -> Any:
    """Numeric labels (``--set positive_label=1`` parses as JSON 1) keep their text form."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, list):
        return [_labels_as_text(v) for v in value]
    return value


class LearnerSpec(BaseModel):
    """Shape of one learner. The stage flags select the ablation variants."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kernel_size: int = Field(1, ge=1)
    filters: int = Field(1, ge=1)
    units: int = Field(1, ge=1)
    attention_dim: Optional[int] = Field(None, ge=1)
    use_conv: bool = True
    use_gru: bool = True
    use_attention: bool = True

    @model_validator(mode="after")
    def _stages(self) -> "LearnerSpec":
        if not (self.use_conv or self.use_gru):
            raise ValueError("a learner needs a convolution or a BiGRU stage")
        if self.use_attention and not self.use_gru:
            raise ValueError("attention pools BiGRU states; use_attention requires use_gru")
        return self

    @property
    def attention_width(self) -> int:
        return self.attention_dim or 2 * self.units

    @property
    def pooled_width(self) -> int:
        return 2 * self.units if self.use_gru else self.filters


class DatasetSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    delimiter: str = "\t"
    has_header: bool = True
    label_column: Column = "label"
    text_columns: List[Column] = Field(default_factory=lambda: ["text"], min_length=1)
    label_names: Optional[List[str]] = None
    confidence_column: Optional[Column] = None
    min_confidence: Optional[float] = None
    drop_labels: List[str] = Field(default_factory=list)

    @field_validator("label_names", "drop_labels", mode="before")
    @classmethod
    def _label_text(cls, value: Any) -> Any:
        return _labels_as_text(value)


class RunConfig(BaseModel):
    """Every knob of a run. Presets fill all of them; the config file and --set override any."""
    model_config = ConfigDict(extra="forbid")

    preset: Literal["dbpedia", "argmine_task_a", "argmine_task_c", "churn", "custom", "tiny"] = "custom"

    # data
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    embedding_path: Optional[str] = None
    delimiter: str = "\t"
    has_header: bool = True
    label_column: Column = "label"
    text_columns: List[Column] = Field(default_factory=lambda: ["text"], min_length=1)
    label_names: Optional[List[str]] = None
    confidence_column: Optional[Column] = None
    min_confidence: Optional[float] = None
    drop_labels: List[str] = Field(default_factory=list)
    clean_text: bool = False

    # text pipeline
    pad_length: int = Field(50, ge=1)
    vocab_cap: Optional[int] = Field(None, ge=1)
    restrict_to_embeddings: bool = False
    embedding_dim: int = Field(50, ge=1)

    # architecture
    architecture: Architecture = "ecga"
    topic: Optional[Literal["V", "R", "D", "I"]] = None
    kernel_sizes: List[int] = Field(default_factory=lambda: [2, 3], min_length=1)
    filters: int = Field(64, ge=1)
    units: int = Field(32, ge=1)
    attention_dim: Optional[int] = Field(None, ge=1)
    conv_activation: Literal["relu", "none"] = "relu"
    dropout: float = Field(0.3, ge=0.0, lt=1.0)

    # optimization
    lr: float = Field(1e-3, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(10, ge=0)
    seed: int = 13
    training: Literal["joint", "independent"] = "joint"
    valid_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    selection_metric: Literal["accuracy", "macro_f1", "loss"] = "accuracy"

    # evaluation
    kfold: int = Field(0, ge=0)
    stratified: bool = True
    positive_label: Optional[str] = None
    workers: int = Field(1, ge=1)

    out_dir: str = "runs/ecga"

    @field_validator("label_names", "drop_labels", "positive_label", mode="before")
    @classmethod
    def _label_text(cls, value: Any) -> Any:
        return _labels_as_text(value)

    @model_validator(mode="after")
    def _consistent(self) -> "RunConfig":
        if any(k < 1 for k in self.kernel_sizes):
            raise ValueError("kernel_sizes: every kernel size must be >= 1")
        if self.architecture != "bigru_att" and max(self.kernel_sizes) > self.pad_length:
            raise ValueError(f"kernel_sizes: {max(self.kernel_sizes)} exceeds pad_length {self.pad_length}")
        if self.kfold == 1:
            raise ValueError("kfold: use 0 (no cross-validation) or a value >= 2")
        return self

    def dataset_schema(self) -> DatasetSchema:
        return DatasetSchema(
            delimiter=self.delimiter,
            has_header=self.has_header,
            label_column=self.label_column,
            text_columns=list(self.text_columns),
            label_names=list(self.label_names) if self.label_names else None,
            confidence_column=self.confidence_column,
            min_confidence=self.min_confidence,
            drop_labels=list(self.drop_labels),
        )

    def learner_specs(self) -> List[LearnerSpec]:
        common = dict(filters=self.filters, units=self.units, attention_dim=self.attention_dim)
        if self.architecture == "ecga":
            return [LearnerSpec(kernel_size=k, **common) for k in self.kernel_sizes]
        stages: Dict[str, Tuple[bool, bool, bool]] = {
            "cga": (True, True, True),
            "cnn_bigru": (True, True, False),
            "bigru_att": (False, True, True),
            "cnn": (True, False, False),
        }
        use_conv, use_gru, use_attention = stages[self.architecture]
        return [LearnerSpec(
            kernel_size=self.kernel_sizes[0],
            use_conv=use_conv,
            use_gru=use_gru,
            use_attention=use_attention,
            **common,
        )]


class MetricsReport(BaseModel):
    label_names: List[str]
    examples: int
    accuracy: float
    error_rate: float
    precision: List[float]
    recall: List[float]
    f1: List[float]
    support: List[int]
    macro_f1: float
    positive_f1: Optional[float] = None
    counts: List[List[int]]
