"""Actor/critic function approximators with hand-rolled backpropagation.

Architecture (shared by actor and critic, differing only in input rows and
head width): per-timestep linear lift to 64 features + ReLU, a bi-directional
LSTM with 64 hidden units per direction, the two final hidden states
concatenated (128 values), a 128-unit linear layer + ReLU, and a linear head.
The actor head is a 2-way softmax; the critic head is a scalar.

Everything runs in numpy.  float64 is the default so finite-difference
oracles have headroom; float32 is permissible for training.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class BiLstmNet:
    """Sequence classifier/regressor over a (rows x width) history matrix.

    Forward accepts a single matrix or a batch (B, rows, width); ``backward``
    needs the cache returned by ``forward``.
    """

    PARAM_ORDER = (
        "w_pre", "b_pre",
        "wx_f", "wh_f", "b_f",
        "wx_b", "wh_b", "b_b",
        "w_mid", "b_mid",
        "w_head", "b_head",
    )

    def __init__(self, in_rows, out_dim, *, hidden=64, pre_width=64,
                 post_width=128, softmax_head=True, rng=None,
                 dtype=np.float64):
        self.in_rows = in_rows
        self.out_dim = out_dim
        self.hidden = hidden
        self.pre_width = pre_width
        self.post_width = post_width
        self.softmax_head = softmax_head
        self.dtype = dtype
        rng = rng or np.random.default_rng()

        def uniform(fan_in, shape):
            k = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-k, k, size=shape).astype(dtype)

        h = hidden
        self.params = {
            "w_pre": uniform(in_rows, (in_rows, pre_width)),
            "b_pre": np.zeros(pre_width, dtype=dtype),
            "wx_f": uniform(pre_width, (pre_width, 4 * h)),
            "wh_f": uniform(h, (h, 4 * h)),
            "b_f": np.zeros(4 * h, dtype=dtype),
            "wx_b": uniform(pre_width, (pre_width, 4 * h)),
            "wh_b": uniform(h, (h, 4 * h)),
            "b_b": np.zeros(4 * h, dtype=dtype),
            "w_mid": uniform(2 * h, (2 * h, post_width)),
            "b_mid": np.zeros(post_width, dtype=dtype),
            "w_head": uniform(post_width, (post_width, out_dim)),
            "b_head": np.zeros(out_dim, dtype=dtype),
        }
        # Forget-gate bias starts at 1 (gate order: input, forget, output, cell).
        self.params["b_f"][h:2 * h] = 1.0
        self.params["b_b"][h:2 * h] = 1.0

    # -- parameter plumbing ---------------------------------------------

    def config(self):
        return {
            "in_rows": self.in_rows, "out_dim": self.out_dim,
            "hidden": self.hidden, "pre_width": self.pre_width,
            "post_width": self.post_width, "softmax_head": self.softmax_head,
            "dtype": np.dtype(self.dtype).name,
        }

    def config_hash(self):
        blob = json.dumps(self.config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def flat_params(self):
        return np.concatenate([self.params[k].ravel() for k in self.PARAM_ORDER])

    def set_flat_params(self, vec):
        i = 0
        for k in self.PARAM_ORDER:
            p = self.params[k]
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size

    def param_count(self):
        return sum(p.size for p in self.params.values())

    def copy(self):
        clone = BiLstmNet(self.in_rows, self.out_dim, hidden=self.hidden,
                          pre_width=self.pre_width, post_width=self.post_width,
                          softmax_head=self.softmax_head, dtype=self.dtype)
        for k in self.params:
            clone.params[k] = self.params[k].copy()
        return clone

    def save(self, path):
        meta = json.dumps(self.config(), sort_keys=True)
        np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8),
                 **self.params)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            dtype = np.dtype(meta.pop("dtype"))
            net = cls(**meta, dtype=dtype)
            for k in net.params:
                net.params[k] = data[k].copy()
        return net

    # -- forward ----------------------------------------------------------

    def _bilstm(self, z, want_cache):
        """Run both LSTM directions in one loop over a stacked 2B batch.

        The input projections are hoisted out of the recurrence; step k
        advances the forward direction at t=k and the backward direction at
        t=width-1-k, so caches are indexed by k, not t.  Gate layout is
        (input, forget, output, cell) so one sigmoid covers the first three.
        """
        p = self.params
        bsz, width, _ = z.shape
        h = self.hidden
        zb = np.ascontiguousarray(z[:, ::-1, :])
        xproj = np.empty((2 * bsz, width, 4 * h), dtype=self.dtype)
        np.matmul(z, p["wx_f"], out=xproj[:bsz])
        np.matmul(zb, p["wx_b"], out=xproj[bsz:])
        xproj[:bsz] += p["b_f"]
        xproj[bsz:] += p["b_b"]
        hs = np.zeros((2 * bsz, h), dtype=self.dtype)
        cs = np.zeros((2 * bsz, h), dtype=self.dtype)
        if want_cache:
            gates = np.empty((2 * bsz, width, 4 * h), dtype=self.dtype)
            tanh_cs = np.empty((2 * bsz, width, h), dtype=self.dtype)
            h_prevs = np.empty((2 * bsz, width, h), dtype=self.dtype)
            c_prevs = np.empty((2 * bsz, width, h), dtype=self.dtype)
        wh_f, wh_b = p["wh_f"], p["wh_b"]
        a = np.empty((2 * bsz, 4 * h), dtype=self.dtype)
        for k in range(width):
            np.matmul(hs[:bsz], wh_f, out=a[:bsz])
            np.matmul(hs[bsz:], wh_b, out=a[bsz:])
            a += xproj[:, k, :]
            sig = _sigmoid(a[:, :3 * h])
            i = sig[:, :h]
            f = sig[:, h:2 * h]
            o = sig[:, 2 * h:]
            g = np.tanh(a[:, 3 * h:])
            c_new = f * cs + i * g
            tanh_c = np.tanh(c_new)
            if want_cache:
                gates[:, k, :3 * h] = sig
                gates[:, k, 3 * h:] = g
                tanh_cs[:, k] = tanh_c
                h_prevs[:, k] = hs
                c_prevs[:, k] = cs
            hs = o * tanh_c
            cs = c_new
        cache = (gates, tanh_cs, h_prevs, c_prevs) if want_cache else None
        return hs[:bsz], hs[bsz:], cache

    def forward(self, x, want_cache=False):
        """Returns output (B, out_dim), or (output, cache) with want_cache."""
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[1] != self.in_rows:
            raise ValueError(f"expected {self.in_rows} input rows, got {x.shape[1]}")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        xs = x.transpose(0, 2, 1)                      # (B, W, rows)
        pre_a = xs @ self.params["w_pre"] + self.params["b_pre"]
        z = np.maximum(pre_a, 0.0)
        hf, hb, lstm_cache = self._bilstm(z, want_cache)
        feat = np.concatenate([hf, hb], axis=1)
        mid_a = feat @ self.params["w_mid"] + self.params["b_mid"]
        mid = np.maximum(mid_a, 0.0)
        logits = mid @ self.params["w_head"] + self.params["b_head"]
        if self.softmax_head:
            shifted = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            out = e / e.sum(axis=1, keepdims=True)
        else:
            out = logits
        if single:
            out_ret = out[0]
        else:
            out_ret = out
        if not want_cache:
            return out_ret
        cache = {
            "single": single, "xs": xs, "pre_a": pre_a, "z": z,
            "lstm": lstm_cache, "feat": feat,
            "mid_a": mid_a, "mid": mid, "out": out,
        }
        return out_ret, cache

    # -- backward ---------------------------------------------------------

    def _bilstm_backward(self, cache, z, dh_final, grads):
        """BPTT over the fused 2B direction batch; gradient enters only at
        the final hidden states.  The loop carries just the dh/dc
        recurrences; weight/input gradients are reduced in bulk afterwards.
        """
        gates, tanh_cs, h_prevs, c_prevs = cache
        h = self.hidden
        bsz, width, _ = z.shape
        da_all = np.empty((2 * bsz, width, 4 * h), dtype=self.dtype)
        dh = dh_final
        dc = np.zeros_like(dh)
        wh_f_t = self.params["wh_f"].T
        wh_b_t = self.params["wh_b"].T
        for k in range(width - 1, -1, -1):
            i = gates[:, k, :h]
            f = gates[:, k, h:2 * h]
            o = gates[:, k, 2 * h:3 * h]
            g = gates[:, k, 3 * h:]
            tanh_c = tanh_cs[:, k]
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c ** 2)
            da = da_all[:, k]
            da[:, :h] = dc * g * i * (1.0 - i)
            da[:, h:2 * h] = dc * c_prevs[:, k] * f * (1.0 - f)
            da[:, 2 * h:3 * h] = do * o * (1.0 - o)
            da[:, 3 * h:] = dc * i * (1.0 - g ** 2)
            dh = np.concatenate([da[:bsz] @ wh_f_t, da[bsz:] @ wh_b_t], axis=0)
            dc = dc * f
        zb = z[:, ::-1, :]
        da_f = da_all[:bsz].reshape(-1, 4 * h)
        da_b = da_all[bsz:].reshape(-1, 4 * h)
        z_flat = z.reshape(-1, z.shape[2])
        zb_flat = np.ascontiguousarray(zb).reshape(-1, z.shape[2])
        grads["wx_f"] = z_flat.T @ da_f
        grads["wx_b"] = zb_flat.T @ da_b
        grads["wh_f"] = h_prevs[:bsz].reshape(-1, h).T @ da_f
        grads["wh_b"] = h_prevs[bsz:].reshape(-1, h).T @ da_b
        grads["b_f"] = da_f.sum(axis=0)
        grads["b_b"] = da_b.sum(axis=0)
        dz = da_all[:bsz] @ self.params["wx_f"].T
        dz += (da_all[bsz:] @ self.params["wx_b"].T)[:, ::-1, :]
        return dz

    def backward(self, cache, dout):
        """Parameter gradients for an upstream gradient w.r.t. the output.

        For a softmax head, ``dout`` is the gradient w.r.t. the probabilities.
        """
        if cache is None:
            raise ValueError("no recorded forward pass")
        dout = np.asarray(dout, dtype=self.dtype)
        if cache["single"] and dout.ndim == 1:
            dout = dout[None]
        if self.softmax_head:
            p = cache["out"]
            dlogits = p * (dout - (dout * p).sum(axis=1, keepdims=True))
        else:
            dlogits = dout
        mid, mid_a, feat = cache["mid"], cache["mid_a"], cache["feat"]
        grads = {}
        grads["w_head"] = mid.T @ dlogits
        grads["b_head"] = dlogits.sum(axis=0)
        dmid = dlogits @ self.params["w_head"].T
        dmid_a = dmid * (mid_a > 0)
        grads["w_mid"] = feat.T @ dmid_a
        grads["b_mid"] = dmid_a.sum(axis=0)
        dfeat = dmid_a @ self.params["w_mid"].T
        h = self.hidden
        dh_final = np.concatenate([dfeat[:, :h], dfeat[:, h:]], axis=0)
        dz = self._bilstm_backward(cache["lstm"], cache["z"], dh_final, grads)
        dpre_a = dz * (cache["pre_a"] > 0)
        dpre_flat = dpre_a.reshape(-1, self.pre_width)
        grads["w_pre"] = cache["xs"].reshape(-1, self.in_rows).T @ dpre_flat
        grads["b_pre"] = dpre_flat.sum(axis=0)
        return grads


def make_actor(width_unused=None, *, rng=None, hidden=64, dtype=np.float64):
    """Two-way policy net over a 3-row observation; architecture is independent
    of the number of terminals."""
    return BiLstmNet(3, 2, hidden=hidden, softmax_head=True, rng=rng,
                     dtype=dtype)


def make_critic(n_terminals, *, rng=None, hidden=64, dtype=np.float64):
    """Scalar value net over the true N-row action history."""
    return BiLstmNet(n_terminals, 1, hidden=hidden, softmax_head=False,
                     rng=rng, dtype=dtype)


class Adam:
    """Adaptive-moment gradient descent on a net's parameter dict."""

    def __init__(self, net: BiLstmNet, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in net.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in net.params.items()}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.net.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class Sgd:
    """Plain gradient descent, available behind a flag."""

    def __init__(self, net: BiLstmNet, lr):
        self.net = net
        self.lr = lr

    def step(self, grads):
        for k, p in self.net.params.items():
            p -= self.lr * grads[k]
