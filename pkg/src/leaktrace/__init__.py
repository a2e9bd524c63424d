"""leaktrace: accountable document transfer with watermark-based leak attribution."""

from .audit import HonestResponder, Lineage, TolerancePolicy, audit_composed, generate_lineage, match_bits
from .crypto import PRODUCTION, TEST, GroupParams, SeededRandomness, SigningKeypair, SymKey
from .document import Document, SplitGeometry, join, psnr, read_pgm, similarity, split, write_pgm
from .ot import ot_batch, ot_choose, ot_init, ot_receive, ot_send, ot_transport
from .protocol import (
    ChoiceProof,
    Party,
    PartyId,
    ProtocolAbort,
    Role,
    SignedStatement,
    Statement,
    assemble_leak,
    trusted_transfer,
    untrusted_transfer,
)
from .watermark import EmbedConfig, WatermarkDescriptor, WatermarkKey, detect, detect_part_bit, embed, wm_keygen

__version__ = "0.1.0"
