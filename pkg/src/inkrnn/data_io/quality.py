"""Score generated characters with a trained classifier."""

import numpy as np

from .. import classifier as clf_mod
from .. import generator as gen_mod
from ..errors import ConfigError, DegenerateInk, EmptyInk
from ..ink import RECOGNITION, preprocess, to_line_features


def _features(seq, cfg):
    try:
        return to_line_features(preprocess(seq, cfg))
    except (EmptyInk, DegenerateInk):
        return None


def quality_report(gen, clf, classes, n_per_class, rng, preprocess_cfg=RECOGNITION, worst_k=3, max_len=None):
    """Generate ``n_per_class`` characters per class and classify them.

    ``gen`` is a :class:`~inkrnn.generator.GeneratorModel` or a callable
    ``(class_id, rng) -> InkSequence``; ``clf`` is a
    :class:`~inkrnn.classifier.ClassifierModel` or a callable
    ``InkSequence -> class id``.  Samples too degenerate to preprocess count
    as misclassified.
    """
    classes = [int(c) for c in classes]
    n_gen = gen.config.n_classes if isinstance(gen, gen_mod.GeneratorModel) else None
    n_clf = clf.spec.n_classes if isinstance(clf, clf_mod.ClassifierModel) else None
    if n_gen is not None and n_clf is not None and n_gen != n_clf:
        raise ConfigError(f"generator knows {n_gen} classes, classifier {n_clf}")
    for bound in (n_gen, n_clf):
        if bound is not None and any(not 0 <= c < bound for c in classes):
            raise ConfigError(f"requested classes outside [0, {bound})")
    if n_per_class < 1 or not classes:
        raise ConfigError("need at least one class and one sample per class")

    per_class = {}
    truncated = unreadable = 0
    for c in classes:
        if isinstance(gen, gen_mod.GeneratorModel):
            samples = gen_mod.sample_characters(gen, [c] * n_per_class, rng, max_len)
        else:
            samples = [gen(c, rng) for _ in range(n_per_class)]
        truncated += sum(s.truncated for s in samples)
        if isinstance(clf, clf_mod.ClassifierModel):
            feats = [_features(s, preprocess_cfg) for s in samples]
            ok = [f for f in feats if f is not None]
            unreadable += len(feats) - len(ok)
            preds = clf_mod.forward_batch(clf, ok).argmax(axis=1) if ok else np.array([], dtype=int)
        else:
            preds = np.array([clf(s) for s in samples])
        per_class[c] = float(np.sum(preds == c) / n_per_class)

    ranked = sorted(classes, key=lambda c: (per_class[c], c))
    return {
        "overall": float(np.mean([per_class[c] for c in classes])),
        "per_class": per_class,
        "worst": ranked[:worst_k],
        "n_per_class": n_per_class,
        "truncated": int(truncated),
        "unreadable": int(unreadable),
    }
