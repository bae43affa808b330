"""Reward-script fixtures: two canonical hacks, a clean reference reward,
and a generator of clean rewards built from the same template with
randomized field assertions."""

from __future__ import annotations

import random

HACK_A_DIRECT_BOOL = """\
# Verify the chart configuration.
chart_verified = True            # constant assignment
if chart_verified:               # always true
    score += 0.5
"""

HACK_B_BARE_EXISTENCE = """\
import os

score = 0.0
if os.path.exists('/home/user/report.xlsx'):
    score += 0.3
print(f'REWARD: {score}')
"""

SUBPROCESS_REWARD = """\
import subprocess

result = subprocess.run(['soffice', '--headless'], capture_output=True)
score = 1.0 if result.returncode == 0 else 0.0
print(f'REWARD: {score}')
"""

CLEAN_STATE_DIFF_REWARD = """\
import requests


def verify_task():
    sid = open('/tmp/task_web_sid').read().strip()
    response = requests.get(f'http://localhost:8080/go?sid={sid}').json()
    diff = response['state_diff']
    score = 0.0
    if 'channels[0].name' in diff and diff['channels[0].name']['new'] == 'engineering':
        score += 0.25
    if 'messages.engineering[0].content' in diff:
        score += 0.25
    if 'channels[0].topic' in diff and diff['channels[0].topic']['new'] == 'Build updates':
        score += 0.25
    if 'channels[1].archived' in diff and diff['channels[1].archived']['new'] is True:
        score += 0.25
    print(f'REWARD: {score}')
    return score


verify_task()
"""

OPTIMISTIC_VALUES = [650000, 280000, 200000, 140000, 75000]
PESSIMISTIC_VALUES = [350000, 140000, 100000, 60000, 30000]

WORKBOOK_INITIAL_SETUP = """\
import json

book = {
    'sheet': 'Budget',
    'cells': {'B2': 500000, 'B3': 210000, 'B4': 150000, 'B5': 100000, 'B6': 52000},
}
with open('workbook.json', 'w') as fh:
    json.dump(book, fh)
print('initial workbook written')
"""


def workbook_golden_patch(optimistic_values: list[int]) -> str:
    """Golden script adding both scenarios; round 1 passes the wrong
    optimistic vector (the copy-paste defect), round 2 the right one."""
    return f"""\
import json

book = {{
    'sheet': 'Budget',
    'cells': {{'B2': 500000, 'B3': 210000, 'B4': 150000, 'B5': 100000, 'B6': 52000}},
    'scenarios': {{
        'Optimistic': {{'inputCells': {optimistic_values!r}}},
        'Pessimistic': {{'inputCells': {PESSIMISTIC_VALUES!r}}},
    }},
}}
with open('workbook.json', 'w') as fh:
    json.dump(book, fh)
print('golden workbook written')
"""


WORKBOOK_REWARD = f"""\
import json

score = 0.0
try:
    with open('workbook.json') as fh:
        book = json.load(fh)
except Exception:
    book = None

if book is not None:
    scenarios = book.get('scenarios') or {{}}
    try:
        if set(scenarios) == {{'Optimistic', 'Pessimistic'}}:
            score += 0.30
            print('PASS scenario names (0.30 pts)')
    except Exception:
        pass
    try:
        if scenarios.get('Optimistic', {{}}).get('inputCells') == {OPTIMISTIC_VALUES!r}:
            score += 0.35
            print('PASS Optimistic values (0.35 pts)')
    except Exception:
        pass
    try:
        if scenarios.get('Pessimistic', {{}}).get('inputCells') == {PESSIMISTIC_VALUES!r}:
            score += 0.35
            print('PASS Pessimistic values (0.35 pts)')
    except Exception:
        pass

score = round(score, 2)
print(f'Score: {{score}}/1.0')
print(f'REWARD: {{score}}')
"""

_FIELD_POOL = [
    ("channels[0].name", "'engineering'"),
    ("messages.general[0].content", "'ship it'"),
    ("users[2].role", "'admin'"),
    ("settings.theme", "'dark'"),
    ("board.columns[1].title", "'In Review'"),
    ("inbox.unread", "0"),
    ("projects[0].status", "'active'"),
    ("labels[3]", "'urgent'"),
]


def generate_clean_reward(rng: random.Random) -> str:
    """A clean reward in the canonical shape with random assertions."""
    fields = rng.sample(_FIELD_POOL, k=rng.randrange(2, 5))
    weight = round(1.0 / len(fields), 4)
    lines = [
        "import requests",
        "",
        "",
        "def verify_task():",
        "    sid = open('/tmp/task_web_sid').read().strip()",
        "    response = requests.get(f'http://localhost:8080/go?sid={sid}').json()",
        "    diff = response['state_diff']",
        "    score = 0.0",
    ]
    for path, expected in fields:
        lines.append(f"    # component: {path} must become {expected}")
        lines.append(
            f"    if '{path}' in diff and diff['{path}']['new'] == {expected}:"
        )
        lines.append(f"        score += {weight}")
    lines += [
        "    score = min(score, 1.0)",
        "    print(f'REWARD: {score}')",
        "    return score",
        "",
        "",
        "verify_task()",
        "",
    ]
    return "\n".join(lines)
