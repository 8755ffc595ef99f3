"""Command line checks: exit codes and printed results.

Usage: cli_tests.py <patternbench binary> <fixtures dir>
"""

import json
import os
import subprocess
import sys
import tempfile
import urllib.request

BIN, FIX = sys.argv[1], sys.argv[2]
failures = 0


def run(*args, env=None):
    full_env = dict(os.environ)
    full_env.pop("PATTERNBENCH_STATE_BUDGET", None)
    full_env.update(env or {})
    return subprocess.run([BIN, *args], capture_output=True, text=True, env=full_env, timeout=120)


def fx(name):
    return os.path.join(FIX, name)


def check(name, cond, detail=""):
    global failures
    print(("ok   " if cond else "FAIL ") + name + ("" if cond else ": " + detail))
    failures += 0 if cond else 1


r = run("validate", fx("r4.json"))
check("validate accepts a valid model", r.returncode == 0 and json.loads(r.stdout)["valid"], r.stderr)
r = run("validate", fx("xor_arity1.json"))
check("validate rejects a one-branch conditional", r.returncode == 1 and "violations" in r.stdout, r.stdout)
r = run("validate", fx("missing.json"))
check("validate: missing file", r.returncode == 2, str(r.returncode))
r = run("validate", fx("truncated.json"))
check("validate: syntax error", r.returncode == 2, str(r.returncode))

r = run("distance", "--empty", fx("r4.json"))
check("distance --empty to R4 is 4", r.returncode == 0 and "d=4" in r.stdout.splitlines(), r.stdout + r.stderr)
r = run("distance", "--empty", fx("empty.json"))
check("distance --empty to empty is 0", r.returncode == 0 and "d=0" in r.stdout.splitlines(), r.stdout)
r = run("distance", fx("r4.json"), fx("r4.json"), "--enumerate", "0")
check("distance between equal models is 0", r.returncode == 0 and "d=0" in r.stdout.splitlines(), r.stdout)
r = run("distance", "--empty", fx("task_a.json"), "--state-budget", "200")
check("distance: tight budget exits 3 with bounds",
      r.returncode == 3 and "lower=" in r.stderr and "upper=" in r.stderr, r.stderr)
r = run("distance", "--empty", fx("task_a.json"), env={"PATTERNBENCH_STATE_BUDGET": "200"})
check("distance: budget from the environment", r.returncode == 3, str(r.returncode))
r = run("distance", fx("r4.json"))
check("distance: source or --empty required", r.returncode == 2, str(r.returncode))

with tempfile.TemporaryDirectory() as tmp:
    out = os.path.join(tmp, "report.json")
    r = run("analyze", fx("detour.jsonl"), fx("r4.json"), fx("r4_regions.json"), "--report", out)
    check("analyze detour session", r.returncode == 0 and "process=2 product=0" in r.stdout, r.stdout + r.stderr)
    report = json.load(open(out)) if os.path.exists(out) else {}
    check("analyze writes the report", report.get("format") == "patternbench-deviation-report", str(report)[:200])
    r = run("analyze", fx("r4_optimal.jsonl"), fx("r4.json"))
    check("analyze optimal session", r.returncode == 0 and "process=0 product=0 dead_ends=0" in r.stdout, r.stdout)
    r = run("analyze", fx("detour.jsonl"), fx("task_a.json"), "--state-budget", "50", "--no-dead-ends")
    check("analyze: budget exceeded exits 3", r.returncode == 3, str(r.returncode) + r.stderr)

    model = os.path.join(tmp, "x.json")
    r = run("apply", fx("empty.json"), fx("insert_x.json"), "-o", model)
    check("apply writes the new model", r.returncode == 0 and os.path.exists(model), r.stderr)
    r = run("apply", fx("r4.json"), fx("unknown_ref.json"))
    check("apply: rejected pattern exits 4", r.returncode == 4 and "pattern rejected" in r.stderr, r.stderr)
    r = run("applicable", model, "--alphabet", "X,Y")
    check("applicable lists instances", r.returncode == 0 and len(json.loads(r.stdout)) > 0, r.stderr)

    r = run("replay", fx("detour.jsonl"))
    replayed = os.path.join(tmp, "replayed.json")
    open(replayed, "w").write(r.stdout)
    d = run("distance", replayed, fx("r4.json"), "--enumerate", "0")
    check("replay of detour session reaches R4", r.returncode == 0 and "d=0" in d.stdout.splitlines(), d.stdout + d.stderr)
    r = run("replay", fx("detour.jsonl"), "--digests")
    check("replay --digests prints every prefix", r.returncode == 0 and len(r.stdout.splitlines()) == 7, r.stdout)
    r = run("replay", fx("detour.jsonl"), "--step", "9")
    check("replay: step beyond the log", r.returncode == 2, str(r.returncode))

    r = run("export-graph", fx("r4.json"))
    graph = json.loads(r.stdout) if r.returncode == 0 else {}
    check("export-graph", "nodes" in graph and "edges" in graph, r.stderr)

with tempfile.TemporaryDirectory() as tmp:
    server = subprocess.Popen([BIN, "serve", "--port", "0", "--session-dir", tmp], stdout=subprocess.PIPE, text=True)
    try:
        line = server.stdout.readline().strip()
        url = line.split()[-1]
        health = json.load(urllib.request.urlopen(url + "/healthz", timeout=10))
        req = urllib.request.Request(url + "/sessions", data=b"{}", method="POST")
        created = json.load(urllib.request.urlopen(req, timeout=10))
        check("serve answers over HTTP", health.get("status") == "ok" and "session_id" in created, line)
        check("serve persists sessions", os.path.exists(os.path.join(tmp, created["session_id"] + ".jsonl")))
    finally:
        server.terminate()
        check("serve stops on SIGTERM", server.wait(timeout=10) == 0)

r = run("frobnicate")
check("unknown command", r.returncode == 2, str(r.returncode))

sys.exit(1 if failures else 0)
