"""Shared test doubles."""

from increpair.features import FEATURE_NAMES


class ScriptedClassifier:
    """Stage classifier whose decisions come from a callable.

    ``rule(info)`` sees the detector's positional context (``stage``, ``n``
    and stage-specific keys such as ``target``, ``cand`` or ``hyp``) and
    returns a bool or a ``(bool, score)`` pair.
    """

    def __init__(self, stage, rule):
        self.manifest = FEATURE_NAMES[stage]
        self.stage = stage
        self.rule = rule
        self.calls = []

    def decide(self, fv, info):
        assert fv.stage == self.stage and len(fv.values) == len(self.manifest)
        self.calls.append(info)
        out = self.rule(info)
        if isinstance(out, tuple):
            return out
        return bool(out), 1.0 if out else 0.0


def scripted(edit=None, rp_start=None, rm_start=None, rp_end=None):
    never = lambda info: False  # noqa: E731
    rules = {"edit": edit, "rp_start": rp_start, "rm_start": rm_start, "rp_end": rp_end}
    return {s: ScriptedClassifier(s, r or never) for s, r in rules.items()}


def gold_oracle(utt):
    """Classifiers that replay an utterance's gold annotation exactly."""
    eds = utt.edit_indices()
    onsets = {r.rp_start: r for r in utt.repairs}
    return scripted(
        edit=lambda i: i["target"] in eds,
        rp_start=lambda i: i["n"] in onsets,
        rm_start=lambda i: i["n"] in onsets and onsets[i["n"]].rm_start == i["cand"],
        rp_end=lambda i: any(r.rp_start == i["hyp"][1] and r.rm_start == i["hyp"][0]
                             and r.rp_end == i["n"] for r in utt.repairs),
    )
