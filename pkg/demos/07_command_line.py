"""
Driving a run from a YAML file
==============================

"""

# The same experiments are reachable from the command line:
#   branchveil verify main --config run.yaml --out results/
# Here the entry point is called in-process on a temporary directory.
import tempfile
from pathlib import Path

from branchveil.cli import main

tmp = Path(tempfile.mkdtemp())
conf = tmp / "run.yaml"
conf.write_text("""
law: {family: BevertonHoltPoisson, a: 2, b: 1}
K_grid: [1e4, 1e5]
replicates: 500
seed: 7
""")
status = main(["verify", "main", "--config", str(conf), "--out", str(tmp / "out"), "--quiet"])
print("exit status:", status)
print((tmp / "out" / "verify_main.csv").read_text())

# A second run with the same seed writes the same bytes.
main(["verify", "main", "--config", str(conf), "--out", str(tmp / "again"), "--quiet"])
print("identical:", (tmp / "out" / "verify_main.csv").read_bytes()
      == (tmp / "again" / "verify_main.csv").read_bytes())
