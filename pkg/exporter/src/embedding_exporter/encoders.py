"""Per-modality encoders.

Two tiers: deterministic built-in encoders computed with numpy (always
available, no model downloads), and wrappers around pretrained models
(Whisper-tiny speech encoder, BERT-base text encoder, ResNet-34 image
encoder) that load strictly from local caches and raise
``EncoderUnavailable`` when the weights are not present.

Every encoder consumes already-loaded media objects and returns one
float32 vector per sample; token/frame models are pooled (mean by
default, first-token optionally).
"""

import hashlib
import re

import numpy as np


class EncoderUnavailable(RuntimeError):
    """A pretrained encoder's weights or libraries are not present locally."""


# --- built-in speech: log filterbank statistics -------------------------------

def _frame(x, frame_len, hop):
    if len(x) < frame_len:
        x = np.pad(x, (0, frame_len - len(x)))
    n = 1 + (len(x) - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def _mel_filterbank(n_filters, n_fft, sr):
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    points = from_mel(np.linspace(0.0, to_mel(sr / 2.0), n_filters + 2))
    bins = np.floor((n_fft + 1) * points / sr).astype(int)
    fb = np.zeros((n_filters, n_fft // 2 + 1))
    for i in range(n_filters):
        lo, mid, hi = bins[i], bins[i + 1], bins[i + 2]
        for b in range(lo, mid):
            if mid > lo:
                fb[i, b] = (b - lo) / (mid - lo)
        for b in range(mid, hi):
            if hi > mid:
                fb[i, b] = (hi - b) / (hi - mid)
    return fb


class FilterbankSpeechEncoder:
    """Mean and deviation of log mel-filterbank energies over frames."""

    name = "filterbank"

    def __init__(self, n_filters=40):
        self.n_filters = n_filters
        self.dim = 2 * n_filters

    def encode(self, waves):
        out = np.zeros((len(waves), self.dim), dtype=np.float32)
        for i, (x, sr) in enumerate(waves):
            frame_len = max(int(0.025 * sr), 32)
            hop = max(int(0.010 * sr), 16)
            frames = _frame(x, frame_len, hop) * np.hanning(frame_len)
            n_fft = int(2 ** np.ceil(np.log2(frame_len)))
            power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
            fb = _mel_filterbank(self.n_filters, n_fft, sr)
            logmel = np.log(power @ fb.T + 1e-10)
            out[i] = np.concatenate([logmel.mean(axis=0), logmel.std(axis=0)])
        return out


# --- built-in acoustic: handcrafted phonation/articulation/prosody set --------

class ProsodyAcousticEncoder:
    """Handcrafted acoustic summary: energy and voicing statistics, pitch
    behaviour (autocorrelation F0 with jitter/shimmer-style deltas),
    spectral shape, and pause structure."""

    name = "prosody"
    dim = 22

    def encode(self, waves):
        out = np.zeros((len(waves), self.dim), dtype=np.float32)
        for i, (x, sr) in enumerate(waves):
            out[i] = self._features(x, sr)
        return out

    def _features(self, x, sr):
        frame_len = max(int(0.040 * sr), 64)
        hop = max(int(0.010 * sr), 16)
        frames = _frame(x, frame_len, hop)
        rms = np.sqrt((frames ** 2).mean(axis=1) + 1e-12)
        zcr = (np.abs(np.diff(np.sign(frames), axis=1)) > 0).mean(axis=1)

        f0, voiced_amp = [], []
        active = rms > max(rms.max() * 0.1, 1e-6)
        lo = int(sr / 400.0)
        hi = min(int(sr / 50.0), frame_len - 1)
        for frame, on in zip(frames, active):
            if not on or hi <= lo:
                continue
            centered = frame - frame.mean()
            ac = np.correlate(centered, centered, mode="full")[frame_len - 1:]
            if ac[0] <= 0:
                continue
            ac = ac / ac[0]
            lag = lo + int(np.argmax(ac[lo:hi]))
            if ac[lag] > 0.5:
                f0.append(sr / lag)
                voiced_amp.append(np.abs(frame).max())
        f0 = np.asarray(f0)
        voiced_amp = np.asarray(voiced_amp)

        spec = np.abs(np.fft.rfft(frames * np.hanning(frame_len), axis=1)) ** 2
        freqs = np.fft.rfftfreq(frame_len, d=1.0 / sr)
        total = spec.sum(axis=1) + 1e-12
        centroid = (spec * freqs).sum(axis=1) / total
        bandwidth = np.sqrt((spec * (freqs - centroid[:, None]) ** 2).sum(axis=1) / total)
        cum = np.cumsum(spec, axis=1)
        rolloff = freqs[np.argmax(cum >= 0.85 * total[:, None], axis=1)]

        pause = rms < max(rms.max() * 0.05, 1e-6)
        run_lengths = []
        in_run = 0
        for p in pause:
            if p:
                in_run += 1
            elif in_run:
                run_lengths.append(in_run)
                in_run = 0
        if in_run:
            run_lengths.append(in_run)

        def stats(v, default=0.0):
            v = np.asarray(v, dtype=np.float64)
            return (float(v.mean()), float(v.std())) if v.size else (default, default)

        f0_mean, f0_std = stats(f0)
        jitter = float(np.abs(np.diff(f0)).mean()) if f0.size > 1 else 0.0
        shimmer = float(np.abs(np.diff(voiced_amp)).mean()) if voiced_amp.size > 1 else 0.0
        feats = [
            *stats(rms), float(np.log(rms.max() / (rms.min() + 1e-9) + 1e-9)),
            *stats(zcr),
            f0_mean, f0_std,
            float(f0.min()) if f0.size else 0.0,
            float(f0.max()) if f0.size else 0.0,
            float(len(f0)) / max(len(frames), 1),
            jitter, shimmer,
            *stats(centroid), *stats(bandwidth), *stats(rolloff),
            float(pause.mean()), float(len(run_lengths)),
            float(np.mean(run_lengths)) if run_lengths else 0.0,
            float(len(x)) / sr,
        ]
        return np.nan_to_num(np.asarray(feats, dtype=np.float32))


# --- built-in text: signed feature hashing of uni/bigrams ---------------------

class HashedBowTextEncoder:
    """Bag of hashed word uni- and bigrams, signed, L2-normalized."""

    name = "hashed-bow"

    def __init__(self, dim=256):
        self.dim = dim

    def _tokens(self, text):
        words = re.findall(r"\w+", text.lower())
        return words + [f"{a}_{b}" for a, b in zip(words, words[1:])]

    def encode(self, texts):
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            for tok in self._tokens(text):
                digest = hashlib.sha1(tok.encode("utf-8")).digest()
                idx = int.from_bytes(digest[:4], "big") % self.dim
                sign = 1.0 if digest[4] % 2 else -1.0
                out[i, idx] += sign
            norm = np.linalg.norm(out[i])
            if norm > 0:
                out[i] /= norm
        return out


# --- built-in image: downsampled intensities + channel statistics -------------

class PixelStatsImageEncoder:
    """16x16 grayscale thumbnail plus per-channel mean/std."""

    name = "pixel-stats"
    dim = 16 * 16 + 6

    def encode(self, images):
        from PIL import Image

        out = np.zeros((len(images), self.dim), dtype=np.float32)
        for i, img in enumerate(images):
            small = np.asarray(img.resize((16, 16), Image.BILINEAR), dtype=np.float32) / 255.0
            gray = small.mean(axis=2).ravel()
            chans = np.asarray(img, dtype=np.float32) / 255.0
            stats = np.concatenate([chans.mean(axis=(0, 1)), chans.std(axis=(0, 1))])
            out[i] = np.concatenate([gray, stats])
        return out


# --- pretrained wrappers (local caches only) -----------------------------------

def _resample(x, sr, target):
    if sr == target:
        return x
    t_old = np.arange(len(x)) / sr
    t_new = np.arange(int(len(x) * target / sr)) / target
    return np.interp(t_new, t_old, x)


class WhisperSpeechEncoder:
    """Transformer speech encoder (whisper-tiny), pooled over frames."""

    name = "whisper-tiny"

    def __init__(self, pooling="mean", model_id="openai/whisper-tiny"):
        try:
            import torch  # noqa: F401
            from transformers import WhisperFeatureExtractor, WhisperModel
        except ImportError as exc:
            raise EncoderUnavailable(f"transformers/torch not installed: {exc}") from exc
        try:
            self.extractor = WhisperFeatureExtractor.from_pretrained(
                model_id, local_files_only=True)
            self.model = WhisperModel.from_pretrained(model_id, local_files_only=True)
        except OSError as exc:
            raise EncoderUnavailable(
                f"{model_id} weights not in the local cache: {exc}") from exc
        self.model.eval()
        self.pooling = pooling
        self.dim = self.model.config.d_model

    def encode(self, waves):
        import torch

        rows = []
        with torch.no_grad():
            for x, sr in waves:
                audio = _resample(x, sr, 16000)
                feats = self.extractor(audio, sampling_rate=16000, return_tensors="pt")
                hidden = self.model.encoder(feats.input_features).last_hidden_state[0]
                pooled = hidden[0] if self.pooling == "first" else hidden.mean(dim=0)
                rows.append(pooled.numpy())
        return np.asarray(rows, dtype=np.float32)


class BertTextEncoder:
    """BERT-base linguistic embeddings, mean- or CLS-pooled."""

    name = "bert-base"

    def __init__(self, pooling="mean", model_id="bert-base-uncased"):
        try:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderUnavailable(f"transformers/torch not installed: {exc}") from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id, local_files_only=True)
            self.model = AutoModel.from_pretrained(model_id, local_files_only=True)
        except OSError as exc:
            raise EncoderUnavailable(
                f"{model_id} weights not in the local cache: {exc}") from exc
        self.model.eval()
        self.pooling = pooling
        self.dim = self.model.config.hidden_size

    def encode(self, texts):
        import torch

        rows = []
        with torch.no_grad():
            for text in texts:
                enc = self.tokenizer(text, return_tensors="pt", truncation=True,
                                     max_length=512)
                hidden = self.model(**enc).last_hidden_state[0]
                if self.pooling == "first":
                    pooled = hidden[0]
                else:
                    mask = enc["attention_mask"][0].unsqueeze(-1)
                    pooled = (hidden * mask).sum(dim=0) / mask.sum()
                rows.append(pooled.numpy())
        return np.asarray(rows, dtype=np.float32)


class ResnetImageEncoder:
    """ResNet-34 penultimate (global-average-pool) features."""

    name = "resnet34"
    dim = 512

    def __init__(self, pooling="mean"):
        try:
            import torch
            from torchvision import models, transforms
        except ImportError as exc:
            raise EncoderUnavailable(f"torchvision/torch not installed: {exc}") from exc
        try:
            net = models.resnet34(weights=models.ResNet34_Weights.IMAGENET1K_V1)
        except Exception as exc:  # weight download blocked / cache missing
            raise EncoderUnavailable(f"resnet34 weights unavailable: {exc}") from exc
        self.backbone = torch.nn.Sequential(*list(net.children())[:-1]).eval()
        self.preprocess = transforms.Compose([
            transforms.Resize(256), transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(mean=[0.485, 0.456, 0.406],
                                 std=[0.229, 0.224, 0.225]),
        ])

    def encode(self, images):
        import torch

        rows = []
        with torch.no_grad():
            for img in images:
                x = self.preprocess(img).unsqueeze(0)
                rows.append(self.backbone(x).squeeze().numpy())
        return np.asarray(rows, dtype=np.float32)


REGISTRY = {
    "speech": {"filterbank": FilterbankSpeechEncoder, "whisper-tiny": WhisperSpeechEncoder},
    "acoustic": {"prosody": ProsodyAcousticEncoder},
    "text": {"hashed-bow": HashedBowTextEncoder, "bert-base": BertTextEncoder},
    "image": {"pixel-stats": PixelStatsImageEncoder, "resnet34": ResnetImageEncoder},
}

DEFAULTS = {"speech": "filterbank", "acoustic": "prosody",
            "text": "hashed-bow", "image": "pixel-stats"}


def make_encoder(modality, name=None, pooling="mean"):
    name = name or DEFAULTS[modality]
    try:
        cls = REGISTRY[modality][name]
    except KeyError:
        raise ValueError(
            f"no encoder {name!r} for modality {modality!r}; "
            f"choices: {sorted(REGISTRY.get(modality, {}))}") from None
    if cls in (WhisperSpeechEncoder, BertTextEncoder, ResnetImageEncoder):
        return cls(pooling=pooling)
    return cls()
