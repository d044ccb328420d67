"""aporokit: corpus construction and classifier benchmarking for aporophobia
detection on social media.

Pipeline stages: ingest (filter + mask) -> geolocate -> topic discovery ->
stratified sampling -> double annotation with adjudication -> chronological
split -> fine-tuned and prompted classification -> metrics, slices, and the
region-sampling ablation.
"""

__version__ = "0.1.0"
