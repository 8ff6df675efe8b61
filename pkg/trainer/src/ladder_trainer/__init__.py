"""Staged supervised fine-tuning with low-rank adapters over instruction
shards, plus serving/exporting the trained refiner behind the chat wire
contract the pipeline's client speaks."""

__version__ = "0.1.0"
