"""Translation-refinement pipeline: build pseudo-refinement triplets from
existing model outputs, partition them into quality tiers, schedule staged
fine-tuning data, and run/evaluate the refinement inference loop."""

__version__ = "0.1.0"
