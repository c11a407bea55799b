"""Small synthetic course dataset and matching mock-provider fixtures.

Three introductory C problems (cyclic quadrilateral check, sum of proper
factors, recursive GCD) with five submissions each. Every submission carries a
``[pid/sid]`` marker in its source so fixture rules can recognise which
submission a prompt is about; generated comments repeat the marker so the
summarization and feedback-scoring prompts are recognisable too.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .templates import DEFAULT_RUBRIC, PromptStyle

PROBLEMS = {
    "p1": (
        "Cyclic quadrilateral check. Read four interior angles (in degrees) of a quadrilateral. "
        "Print \"Yes\" if the quadrilateral can be cyclic, i.e. the angles sum to 360 and both pairs "
        "of opposite angles sum to 180, otherwise print \"No\"."
    ),
    "p2": (
        "Sum of factors. Read a positive integer n entered by the user and print the sum of all of "
        "its factors excluding n itself."
    ),
    "p3": (
        "Greatest common divisor. Write a recursive C function int gcd(int a, int b) that uses the "
        "Euclidean algorithm, and a main that reads two integers and prints their GCD."
    ),
}

_P1 = [
    """#include <stdio.h>
/* [p1/s01] */
int main(void) {
    int a, b, c, d;
    scanf("%d %d %d %d", &a, &b, &c, &d);
    if (a + b + c + d == 360 && a + c == 180 && b + d == 180)
        printf("Yes\\n");
    else
        printf("No\\n");
    return 0;
}
""",
    """#include <stdio.h>
/* [p1/s02] */
int main(void) {
    int x1, x2, x3, x4;
    scanf("%d %d %d %d", &x1, &x2, &x3, &x4);
    if (x1 + x3 == 180) printf("Yes\\n"); else printf("No\\n");
    return 0;
}
""",
    """#include <stdio.h>
/* [p1/s03] */
int main(void){int a,b,c,d;scanf("%d%d%d%d",&a,&b,&c,&d);
if(a+b+c+d==360&&a+c==180)printf("Yes");else printf("No");return 0;}
""",
    """#include <stdio.h>
/* [p1/s04] check opposite angles */
int is_cyclic(int angle[4]) {
    int total = angle[0] + angle[1] + angle[2] + angle[3];
    return total == 360 && angle[0] + angle[2] == 180 && angle[1] + angle[3] == 180;
}

int main(void) {
    int angle[4];
    for (int i = 0; i < 4; i++) scanf("%d", &angle[i]);
    printf(is_cyclic(angle) ? "Yes\\n" : "No\\n");
    return 0;
}
""",
    """#include <stdio.h>
/* [p1/s05] */
int main(void) {
    int a, b, c, d;
    scanf("%d %d %d %d", &a, &b, &c, &d);
    printf("Yes\\n");
    return 0;
}
""",
]

_P2 = [
    """#include <stdio.h>
/* [p2/s01] */
int main(void) {
    int n, sum = 0;
    scanf("%d", &n);
    for (int i = 1; i < n; i++)
        if (n % i == 0) sum += i;
    printf("%d\\n", sum);
    return 0;
}
""",
    """#include <stdio.h>
/* [p2/s02] */
int main(void) {
    int n, sum = 0;
    scanf("%d", &n);
    for (int i = 1; i <= n; i++)
        if (n % i == 0) sum += i;
    printf("%d\\n", sum);
    return 0;
}
""",
    """#include <stdio.h>
/* [p2/s03] sum of proper divisors */
int proper_divisor_sum(int n) {
    int sum = n > 1 ? 1 : 0;
    for (int i = 2; i * i <= n; i++) {
        if (n % i == 0) {
            sum += i;
            if (i != n / i) sum += n / i;
        }
    }
    return sum;
}

int main(void) {
    int n;
    scanf("%d", &n);
    printf("%d\\n", proper_divisor_sum(n));
    return 0;
}
""",
    """#include <stdio.h>
/* [p2/s04] */
int main(void){int n,s=0,i;scanf("%d",&n);for(i=1;i<n;i++)if(n%i==0)s+=i;printf("%d",s);}
""",
    """#include <stdio.h>
/* [p2/s05] */
int main(void) {
    int n, sum = 0;
    scanf("%d", &n);
    for (int i = 2; i < n; i++)
        if (n % i == 0) sum += i;
    printf("%d\\n", sum);
    return 0;
}
""",
]

_P3 = [
    """#include <stdio.h>
/* [p3/s01] */
int gcd(int a, int b) {
    if (b == 0) return a;
    return gcd(b, a % b);
}

int main(void) {
    int a, b;
    scanf("%d %d", &a, &b);
    printf("%d\\n", gcd(a, b));
    return 0;
}
""",
    """#include <stdio.h>
/* [p3/s02] iterative version */
int gcd(int a, int b) {
    while (b != 0) { int t = a % b; a = b; b = t; }
    return a;
}

int main(void) {
    int a, b;
    scanf("%d %d", &a, &b);
    printf("%d\\n", gcd(a, b));
    return 0;
}
""",
    """#include <stdio.h>
/* [p3/s03] */
int g(int x,int y){return y?g(y,x%y):x;}
int main(void){int x,y;scanf("%d%d",&x,&y);printf("%d",g(x,y));return 0;}
""",
    """#include <stdio.h>
/* [p3/s04] */
int gcd(int a, int b) {
    if (a == b) return a;
    if (a > b) return gcd(a - b, b);
    return gcd(a, b - a);
}

int main(void) {
    int a, b;
    scanf("%d %d", &a, &b);
    printf("%d\\n", gcd(a, b));
    return 0;
}
""",
    """#include <stdio.h>
/* [p3/s05] */
int gcd(int a, int b) {
    return gcd(b, a % b);
}

int main(void) {
    int a, b;
    scanf("%d %d", &a, &b);
    printf("%d\\n", gcd(a, b));
    return 0;
}
""",
]

SOURCES = {"p1": _P1, "p2": _P2, "p3": _P3}

HUMAN_SCORES = {
    "p1/s01": 95, "p1/s02": 45, "p1/s03": 70, "p1/s04": 100, "p1/s05": 20,
    "p2/s01": 95, "p2/s02": 40, "p2/s03": 100, "p2/s04": 80, "p2/s05": 60,
    "p3/s01": 95, "p3/s02": 55, "p3/s03": 80, "p3/s04": 75, "p3/s05": 15,
}

RUN_OUTPUTS = {
    "p1/s01": "input: 90 90 90 90\nYes\ninput: 100 80 70 110\nNo\n",
    "p2/s01": "input: 28\n28\ninput: 12\n16\n",
    "p2/s02": "input: 28\n56\ninput: 12\n28\n",
    "p3/s05": "input: 12 18\nSegmentation fault\n",
}


def submission_ids(n_per_problem: int = 5) -> list[str]:
    return [f"{pid}/s{i:02d}" for pid in sorted(PROBLEMS) for i in range(1, n_per_problem + 1)]


def write_sample_dataset(root: Path | str) -> Path:
    """Lay out the three-problem dataset under ``root`` and return ``root``."""
    root = Path(root)
    for pid, statement in PROBLEMS.items():
        pdir = root / "problems" / pid
        pdir.mkdir(parents=True, exist_ok=True)
        (pdir / "statement.txt").write_text(statement + "\n", encoding="utf-8")
        with open(pdir / "rubric.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(DEFAULT_RUBRIC.to_dict(), fh, sort_keys=False)
        for i, code in enumerate(SOURCES[pid], start=1):
            sdir = pdir / "submissions" / f"s{i:02d}"
            sdir.mkdir(parents=True, exist_ok=True)
            (sdir / "code.c").write_text(code, encoding="utf-8")
            out = RUN_OUTPUTS.get(f"{pid}/s{i:02d}")
            if out is not None:
                (sdir / "run_output.txt").write_text(out, encoding="utf-8")
    with open(root / "human_scores.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["submission_id", "score"])
        for sid in sorted(HUMAN_SCORES):
            w.writerow([sid, HUMAN_SCORES[sid]])
    return root


# -- mock provider fixtures ----------------------------------------------------

DEFAULT_MODELS = {
    # name: (bias against the human score, noise sigma)
    "small-model": (-8, 9.0),
    "large-model": (-3, 3.0),
}


def _grade_text(style: str, marker: str, score: int, variant: int) -> str:
    comment = f"{marker} Comment {variant}: the program is scored {score}/100 against the rubric."
    obj = {"comment": comment, "score": score}
    if style == PromptStyle.ZERO_SHOT_COT.value:
        c = score * 8 // 10
        obj = {
            "reasoning_steps": (
                "Step-by-step breakdown of the evaluation process:\n"
                f"Correctness of Output ({c}/80): checked against the sample input.\n"
                f"Code Readability ({(score - c) // 2}/10): naming and layout.\n"
                f"Functionality ({score - c - (score - c) // 2}/10): requirements met."
            ),
            **obj,
        }
    body = json.dumps(obj, ensure_ascii=False)
    if variant % 7 == 3:
        return f"```json\n{body}\n```"
    if variant % 7 == 5:
        return f"Here is my evaluation of the submission.\n{body}\nLet me know if you need more detail."
    return body


def _summary_text(marker: str) -> str:
    return (
        f"Correctness of Output:\n{marker} The output matches the expected result on the sample inputs.\n\n"
        f"Code Readability:\n{marker} Variable names could be more descriptive.\n\n"
        f"Functionality:\n{marker} The required behaviour is implemented.\n\n"
        f"Overview Comments:\n{marker} A reasonable solution; tidy the naming and add comments."
    )


def _geval_logprobs(center: int, spread: float) -> list[dict]:
    weights = {s: math.exp(-((s - center) ** 2) / (2 * spread**2)) for s in range(1, 6)}
    total = math.fsum(weights.values())
    top = [{"token": str(s), "logprob": math.log(w / total)} for s, w in sorted(weights.items())]
    top.append({"token": " ", "logprob": -9.0})
    return [{"token": str(center), "logprob": math.log(weights[center] / total), "top_logprobs": top}]


def build_mock_rules(
    models: Optional[dict[str, tuple[int, float]]] = None,
    seed: int = 7,
    pool_size: int = 20,
    malformed_slots: Sequence[int] = (3,),
    low_quality: Sequence[str] = ("p1/s05", "p3/s05"),
    evaluator: str = "large-model",
) -> list[dict]:
    """Fixture rules answering every grade, summary and feedback-scoring request.

    Each (model, style, submission) gets ``pool_size`` scores drawn around
    ``human + bias``; a few are fenced or wrapped in prose, and the slots in
    ``malformed_slots`` return unparseable text on their first attempt.
    """
    models = models or DEFAULT_MODELS
    rng = np.random.default_rng(seed)
    rules: list[dict] = []
    for name, (bias, sigma) in models.items():
        for sid in sorted(HUMAN_SCORES):
            marker = f"[{sid}]"
            for q in malformed_slots:
                rules.append({"endpoint": name, "task": "grade", "contains": marker, "query_index": q,
                              "attempt": 0, "response": f"{marker} The score is probably high."})
            for style in PromptStyle:
                center = HUMAN_SCORES[sid] + bias + (4 if style is PromptStyle.ZERO_SHOT else 0)
                noise = np.rint(rng.normal(0.0, sigma, pool_size)).astype(int)
                scores = [int(min(100, max(0, center + d))) for d in noise]
                rules.append({
                    "endpoint": name, "task": "grade", "style": style.value, "contains": marker,
                    "responses": [_grade_text(style.value, marker, s, v) for v, s in enumerate(scores)],
                })
            rules.append({"endpoint": name, "task": "summarize", "contains": marker, "response": _summary_text(marker)})
    for sid in sorted(HUMAN_SCORES):
        marker = f"[{sid}]"
        center = 2 if sid in low_quality else 4
        rules.append({"endpoint": evaluator, "task": "geval", "contains": marker, "response": str(center),
                      "logprobs": _geval_logprobs(center, 0.7)})
    return rules


def write_mock_fixtures(path: Path | str, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump({"rules": build_mock_rules(**kwargs)}, fh, sort_keys=False, allow_unicode=True)
    return path


def write_sample_config(
    path: Path | str,
    dataset_root: Path | str,
    models: Optional[dict[str, tuple[int, float]]] = None,
    evaluator: str = "large-model",
    **overrides,
) -> Path:
    models = models or DEFAULT_MODELS
    config = {
        "endpoints": [
            {"name": name, "base_url": f"http://mock.invalid/{name}/v1", "model_id": name,
             "supports_logprobs": name == evaluator}
            for name in models
        ],
        "dataset_root": str(dataset_root),
        "styles": [s.value for s in PromptStyle],
        "ensemble": {"size": 10, "method": "mode"},
        "generation": {"temperature": 0.7, "max_tokens": 2048},
        "geval": {"evaluator": evaluator, "review_threshold": 0.5},
        "agreement": {"repeats": 20},
        "parallelism": 4,
        "run_seed": 0,
        "output_dir": "runs",
    }
    config.update(overrides)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config, fh, sort_keys=False)
    return path
