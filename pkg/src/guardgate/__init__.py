"""Model-agnostic guardrail gateway for LLM traffic.

Runs independent risk detectors (PII extraction, keyword classification,
verbatim attribution, remote hooks) in parallel over a prompt or response,
then applies declarative policy templates to decide PASS, WARN, MASK or
BLOCK and to produce the transformed output text.
"""

from .attribution import (
    AttributionDetector,
    AttributionMatch,
    AttributionTrace,
    CorpusIndex,
    MatchKind,
    attribute,
    index_corpus,
)
from .config import AppConfig, Runtime, build_runtime, load_config
from .detectors import (
    DetectorDescriptor,
    DetectorKind,
    DetectorRegistry,
    DetectorResult,
    FailMode,
    RemoteDetector,
    ResultStatus,
)
from .errors import (
    ConfigError,
    GuardgateError,
    PolicyLoadError,
    StoreError,
    ValidationError,
)
from .keywords import (
    CategoryLexicon,
    LexiconDetector,
    build_lexicon,
    classify,
    load_lexicon,
    save_lexicon,
)
from .model import (
    Decision,
    Direction,
    ExtractionPair,
    Finding,
    RuleFiring,
    Sensitivity,
    ShieldRequest,
    Span,
    Verdict,
)
from .orchestrator import Orchestrator
from .pii import MaskStyle, PiiDetector, PiiRuleSet, load_rulepack, redact
from .policy import (
    PolicyEngine,
    PolicyRule,
    PolicyTemplate,
    builtin_policies,
    load_policy_dir,
    load_policy_file,
    parse_template,
)
from .store import DataStore

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "AttributionDetector",
    "AttributionMatch",
    "AttributionTrace",
    "CategoryLexicon",
    "ConfigError",
    "CorpusIndex",
    "DataStore",
    "Decision",
    "DetectorDescriptor",
    "DetectorKind",
    "DetectorRegistry",
    "DetectorResult",
    "Direction",
    "ExtractionPair",
    "FailMode",
    "Finding",
    "GuardgateError",
    "LexiconDetector",
    "MaskStyle",
    "MatchKind",
    "Orchestrator",
    "PiiDetector",
    "PiiRuleSet",
    "PolicyEngine",
    "PolicyLoadError",
    "PolicyRule",
    "PolicyTemplate",
    "RemoteDetector",
    "ResultStatus",
    "RuleFiring",
    "Runtime",
    "Sensitivity",
    "ShieldRequest",
    "Span",
    "StoreError",
    "ValidationError",
    "Verdict",
    "attribute",
    "build_lexicon",
    "build_runtime",
    "builtin_policies",
    "classify",
    "index_corpus",
    "load_config",
    "load_lexicon",
    "load_policy_dir",
    "load_policy_file",
    "load_rulepack",
    "parse_template",
    "redact",
    "save_lexicon",
    "__version__",
]
