"""Auto-decoded rater latent embeddings for learning from single-rater
subjective ordinal labels, with a synthetic rater simulator and the ROC /
partial AUC / Jonckheere-Terpstra evaluation protocol."""

__version__ = "0.1.0"
