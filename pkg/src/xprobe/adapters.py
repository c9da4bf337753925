"""Adapters wrapping real models behind the oracle interface.

``OnnxOracle`` runs a standard interchange-format network locally (needs
the optional onnxruntime dependency); ``RemoteOracle`` posts batches to a
scoring service.  Both normalize with per-channel mean/std and softmax the
outputs so confidences are class-conditional probabilities.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OracleError
from .oracles import ClassifierOracle


@dataclass(frozen=True)
class ModelConfig:
    name: str
    path_or_url: str
    input_size: int = 224
    mean: tuple = (0.485, 0.456, 0.406)
    std: tuple = (0.229, 0.224, 0.225)
    class_count: int = 1000

    @classmethod
    def from_json(cls, path) -> "ModelConfig":
        with open(path) as fh:
            obj = json.load(fh)
        try:
            return cls(
                name=str(obj["name"]),
                path_or_url=str(obj["path_or_url"]),
                input_size=int(obj.get("input_size", 224)),
                mean=tuple(float(v) for v in obj.get("mean", (0.485, 0.456, 0.406))),
                std=tuple(float(v) for v in obj.get("std", (0.229, 0.224, 0.225))),
                class_count=int(obj.get("class_count", 1000)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model config {path}: {exc}") from exc

    def __post_init__(self):
        if self.input_size < 1:
            raise ConfigError("input_size must be positive")
        if self.class_count < 1:
            raise ConfigError("class_count must be positive")
        if len(self.mean) != len(self.std):
            raise ConfigError("mean and std must have matching lengths")
        if any(s <= 0 for s in self.std):
            raise ConfigError("std entries must be positive")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class OnnxOracle(ClassifierOracle):
    """Local inference through onnxruntime on an interchange-format model."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        try:
            import onnxruntime
        except ImportError as exc:
            raise OracleError(
                "onnxruntime is not installed; install the 'onnx' extra to use local model files"
            ) from exc
        self.config = config
        self.name = config.name
        self.class_count = config.class_count
        self.thread_safe = False
        try:
            self._session = onnxruntime.InferenceSession(
                config.path_or_url, providers=["CPUExecutionProvider"]
            )
        except Exception as exc:
            raise OracleError(f"failed to load model {config.path_or_url}: {exc}") from exc
        self._input_name = self._session.get_inputs()[0].name

    def _preprocess(self, images: np.ndarray) -> np.ndarray:
        mean = np.asarray(self.config.mean, dtype=np.float32).reshape(1, -1, 1, 1)
        std = np.asarray(self.config.std, dtype=np.float32).reshape(1, -1, 1, 1)
        if images.shape[1] != mean.shape[1]:
            raise OracleError(
                f"model {self.name} expects {mean.shape[1]} channels, got {images.shape[1]}"
            )
        return (images - mean) / std

    def score_all_batch(self, images: np.ndarray) -> np.ndarray:
        self.evaluations += images.shape[0]
        prepared = self._preprocess(np.ascontiguousarray(images, dtype=np.float32))
        try:
            (logits,) = self._session.run(None, {self._input_name: prepared})
        except Exception as exc:
            raise OracleError(f"model {self.name} inference failed: {exc}") from exc
        logits = np.asarray(logits, dtype=np.float64)
        if logits.ndim != 2 or logits.shape[1] != self.class_count:
            raise OracleError(
                f"model {self.name} returned shape {logits.shape}, expected (B, {self.class_count})"
            )
        return _softmax(logits)

    def score_batch(self, images: np.ndarray, class_id: int) -> np.ndarray:
        if not 0 <= class_id < self.class_count:
            raise OracleError(f"class id {class_id} out of range")
        return self.score_all_batch(images)[:, class_id]

    def scores_full(self, pixels: np.ndarray) -> np.ndarray:
        return self.score_all_batch(pixels[None])[0]


def encode_batch(images: np.ndarray) -> list:
    """Base64 little-endian float32 CHW payloads, one per image."""
    return [base64.b64encode(np.ascontiguousarray(img, dtype="<f4").tobytes()).decode("ascii") for img in images]


class RemoteOracle(ClassifierOracle):
    """Scores batches through a POST /score JSON endpoint."""

    def __init__(self, url: str, name: str = "remote", class_count: int = 1000, timeout: float = 30.0):
        super().__init__()
        self.url = url.rstrip("/")
        self.name = name
        self.class_count = class_count
        self.timeout = timeout
        self.thread_safe = False

    def score_batch(self, images: np.ndarray, class_id: int) -> np.ndarray:
        import requests

        if not 0 <= class_id < self.class_count:
            raise OracleError(f"class id {class_id} out of range")
        self.evaluations += images.shape[0]
        payload = {"class_id": int(class_id), "images": encode_batch(images)}
        try:
            response = requests.post(f"{self.url}/score", json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise OracleError(f"remote oracle {self.name} unreachable: {exc}") from exc
        if response.status_code != 200:
            raise OracleError(
                f"remote oracle {self.name} returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            confidences = response.json()["confidences"]
        except (ValueError, KeyError) as exc:
            raise OracleError(f"remote oracle {self.name} returned malformed JSON: {exc}") from exc
        if len(confidences) != images.shape[0]:
            raise OracleError(
                f"remote oracle {self.name} returned {len(confidences)} confidences for {images.shape[0]} images"
            )
        return np.asarray([float(c) for c in confidences], dtype=np.float64)
