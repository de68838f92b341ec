"""
Gating reports before they enter a negative training set
========================================================
"""

from synthsusp.errors import UnclassifiableReport
from synthsusp.report import classify_text, split_sections

reports = {
    "clean negative": "FINDINGS: No suspicious target was seen.\nIMPRESSION: No more than mildly suspicious finding.",
    "positive impression": "FINDINGS: No suspicious target was seen.\nIMPRESSION: Highly suspicious lesion, PI-RADS 5.",
    "no impression": "FINDINGS: No suspicious target was seen.",
}

for label, text in reports.items():
    doc = split_sections(text)
    try:
        v = classify_text(text)
    except UnclassifiableReport as exc:
        print(f"{label:>20}: unclassifiable ({exc})")
        continue
    hits = ", ".join(f"{e.rule}@{e.start}" for e in v.evidence)
    print(f"{label:>20}: negative={v.is_negative} sections={sorted(doc.sections)} evidence=[{hits}]")

# the same verdicts from the shell:
#   synthsusp classify-report report.txt; echo $?   # 0 negative, 1 not negative, 2 unclassifiable
