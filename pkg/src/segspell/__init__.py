"""Fingerspelling sequence recognition at desk scale on synthetic data.

Frame classifiers feed a tandem GMM-HMM recognizer and segmental
(semi-Markov) CRFs in rescoring, first-pass, and two-pass cascade
configurations, with signer adaptation and letter-error-rate scoring.
"""

__version__ = "0.1.0"
