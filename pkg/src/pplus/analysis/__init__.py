from .attention import (APPEARANCE, OBJECT, AttentionRecord, AttentionRecorder, LabeledPrompt, RatioReport,
                        attention_ratio, collect, prompt_bank, ratio_table, span_mass, token_labels, toy_prompt_bank)
from .embedding import Embedder, ToyEmbedder, cosine, subject_similarity, text_similarity
from .sweep import DEFAULT_PAIRS, SubsetSweepReport, SweepRow, default_subsets, subset_sweep, sweep_subset
