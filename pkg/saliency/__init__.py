from .saliency import SaliencyResult, export_saliency, saliency_iterate, saliency_scores
