from .encoder import Contexts, LookupTable, TextEncoder, build_contexts, route
from .layers import (MICRO_5, REFERENCE_16, SUBSET_RANGES, LayerId, LayerNameError, LayerRegistry,
                     LayerSubset, growing_subsets, subset_sequence)
from .prompts import ExtendedPrompt, LayerSpec, MixSpec, mix_extended, mix_subset
from .vocab import (PLACEHOLDER, OutOfVocabulary, PromptTemplate, Vocabulary, default_vocabulary,
                    split_words)
