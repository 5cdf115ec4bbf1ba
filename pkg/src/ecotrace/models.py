"""scikit-learn style wrappers.

Traces (or epoch profiles) play the role of samples; the outputs are plain
numpy arrays so the wrappers compose with pipelines and ``clone``.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .analysis import WATTMETER, EpochProfile, extrapolate, idle_baseline_from_totals
from .errors import EcotraceError, InsufficientDataError
from .estimators import EstimateOptions, estimate_trace, row_order
from .telemetry.trace import channel_name
from .validation import check_strategies, check_traces


class StrategyEstimator(TransformerMixin, BaseEstimator):
    """Pre-PUE energy (Wh) of each trace under each selected strategy.

    One output column per estimator row (CC and E2 give a process and a
    machine column). A strategy that cannot run on a trace yields NaN.
    """

    def __init__(self, strategies=None, cumulator_component="cpu", bytes_communicated=0.0):
        self.strategies = strategies
        self.cumulator_component = cumulator_component
        self.bytes_communicated = bytes_communicated

    def _rows(self, trace, options):
        out = {}
        for strategy in self.strategies_:
            try:
                for b in estimate_trace(strategy, trace, options):
                    out[b.label] = b.total_energy
            except EcotraceError:
                continue
        return out

    def fit(self, X, y=None):
        traces = check_traces(X)
        self.strategies_ = check_strategies(self.strategies)
        labels = set()
        for s in self.strategies_:
            if s.value in ("CC", "E2"):
                labels.update((f"{s.value}(P)", f"{s.value}(M)"))
            else:
                labels.add(s.value)
        self.feature_names_out_ = np.array(sorted(labels, key=row_order), dtype=object)
        self.n_traces_seen_ = len(traces)
        return self

    def _options(self):
        return EstimateOptions(
            cumulator_component=self.cumulator_component,
            bytes_communicated=self.bytes_communicated,
        )

    def transform(self, X):
        check_is_fitted(self, "feature_names_out_")
        traces = check_traces(X)
        options = self._options()
        out = np.full((len(traces), len(self.feature_names_out_)), np.nan)
        for i, trace in enumerate(traces):
            rows = self._rows(trace, options)
            for j, label in enumerate(self.feature_names_out_):
                if label in rows:
                    out[i, j] = rows[label]
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_names_out_")
        return self.feature_names_out_.copy()


class EpochExtrapolator(RegressorMixin, BaseEstimator):
    """Fit on the first few epochs, predict energy for a number of epochs.

    ``predict`` takes epoch counts and returns energy in Wh;
    ``predict_duration`` returns seconds.
    """

    def __init__(self, channel: Optional[str] = None):
        self.channel = channel

    def fit(self, X: Sequence[EpochProfile], y=None):
        profiles = list(X)
        if not profiles:
            raise InsufficientDataError("no epoch profiles to fit")
        self.n_epochs_seen_ = len(profiles)
        energy, duration = extrapolate(profiles, len(profiles), self.channel)
        self.energy_per_epoch_ = energy / len(profiles)
        self.duration_per_epoch_ = duration / len(profiles)
        return self

    def _counts(self, X):
        counts = np.asarray(X, dtype=float).reshape(-1)
        if np.any(counts < self.n_epochs_seen_):
            raise ValueError("cannot predict fewer epochs than were measured")
        return counts

    def predict(self, X):
        check_is_fitted(self, "energy_per_epoch_")
        return self._counts(X) * self.energy_per_epoch_

    def predict_duration(self, X):
        check_is_fitted(self, "duration_per_epoch_")
        return self._counts(X) * self.duration_per_epoch_

    def score(self, X, y, sample_weight=None):
        # relative-error based, so a perfect extrapolation scores 1
        pred = self.predict(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        return float(1.0 - np.mean(np.abs(pred - y) / np.abs(y)))


class IdleBaseline(TransformerMixin, BaseEstimator):
    """Learn the idle power from an idle trace, then split active traces
    into ``[dynamic Wh, idle fraction]``."""

    def __init__(self, channel: str = WATTMETER):
        self.channel = channel

    def fit(self, X, y=None):
        channel = channel_name(self.channel)
        idle = check_traces(X, [channel])
        energy = math.fsum(t.power_energy_wh(channel) for t in idle)
        duration = math.fsum(t.duration for t in idle)
        self.idle_energy_ = energy
        self.idle_duration_ = duration
        self.idle_power_ = energy * 3600.0 / duration
        return self

    def transform(self, X):
        check_is_fitted(self, "idle_power_")
        channel = channel_name(self.channel)
        active = check_traces(X, [channel])
        out = np.empty((len(active), 2))
        for i, t in enumerate(active):
            r = idle_baseline_from_totals(
                t.power_energy_wh(channel), t.duration, self.idle_energy_, self.idle_duration_
            )
            out[i] = (r.dynamic_energy, r.idle_fraction)
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array(["dynamic_energy_wh", "idle_fraction"], dtype=object)
