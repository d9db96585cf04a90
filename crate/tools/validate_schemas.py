"""Validate zoo specs and generated reports against the JSON schemas.

    cargo build -p ergocert-cli && python tools/validate_schemas.py
"""
import json
import os
import subprocess
import sys
import tempfile

import jsonschema

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
BINARY = os.path.join(ROOT, "target", "debug", "ergocert")


def run(*args):
    out = subprocess.run([BINARY, *args], capture_output=True, text=True)
    return json.loads(out.stdout)


def main():
    spec_schema = json.load(open(os.path.join(ROOT, "schemas", "chain-spec.schema.json")))
    report_schema = json.load(open(os.path.join(ROOT, "schemas", "report.schema.json")))
    names = subprocess.run([BINARY, "zoo", "list"], capture_output=True, text=True).stdout.split("\n")
    names = [line.split()[0] for line in names if line.strip()]
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            spec = run("zoo", "show", name)
            jsonschema.validate(spec, spec_schema)
            path = os.path.join(tmp, f"{name}.json")
            with open(path, "w") as fh:
                json.dump(spec, fh)
            for command in ("analyze", "certify"):
                jsonschema.validate(run(command, path), report_schema)
            print(f"{name}: ok")

        spec = run("zoo", "show", "two-state")
        path = os.path.join(tmp, "small.json")
        spec.update(horizon=4, t_grid=[1.0, 2.0])
        with open(path, "w") as fh:
            json.dump(spec, fh)
        jsonschema.validate(run("diagnose", path, "--lemma1-batch", "10"), report_schema)
        spec.update(horizon=30, t_grid=[5.0, 10.0])
        with open(path, "w") as fh:
            json.dump(spec, fh)
        jsonschema.validate(run("certify", path, "--samples", "1000"), report_schema)
        print("diagnose and simulated certify: ok")


if __name__ == "__main__":
    sys.exit(main())
