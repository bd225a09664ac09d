"""stylevox: two-level style-controllable text-to-speech.

Phoneme-level prosody tokens are fused into the text encoding through a
gated tanh unit; a sentence-level paralinguistic prompt embedding drives
feature-wise modulation and global decoder conditioning inside a
VAE + normalizing-flow + GAN speech generator.
"""

__version__ = "0.1.0"

from .config import Config, desk_config, full_scale_config, toy_config
from .frontend import Language, PhonemeSequence, Vocabulary, default_vocabulary

__all__ = [
    "Config",
    "Language",
    "PhonemeSequence",
    "Vocabulary",
    "default_vocabulary",
    "desk_config",
    "full_scale_config",
    "toy_config",
    "__version__",
]
