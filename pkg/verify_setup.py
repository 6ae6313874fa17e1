"""
Quick verification script to check if the project is set up correctly.
Run this before a long Monte Carlo run.
"""
import sys
import os
from pathlib import Path

def check_python_version():
    """Check Python version."""
    if sys.version_info < (3, 10):
        print("❌ Python 3.10+ required. Current:", sys.version)
        return False
    print(f"✅ Python version: {sys.version.split()[0]}")
    return True

def check_dependencies():
    """Check if the numerical stack is installed."""
    try:
        import numpy
        import scipy
        import pandas
        import pydantic
        if not pydantic.VERSION.startswith("1."):
            print(f"❌ pydantic 1.x required, found {pydantic.VERSION}")
            return False
        print("✅ Dependencies installed")
        return True
    except ImportError as e:
        print(f"❌ Missing dependency: {e.name}")
        print("   Run: pip install -r netdid/requirements.txt")
        return False

def check_package_structure():
    """Check if package files exist."""
    required_files = [
        "netdid/app/graph.py",
        "netdid/app/numerics.py",
        "netdid/app/estimators.py",
        "netdid/app/variance.py",
        "netdid/app/dgp.py",
        "netdid/app/benchmarks.py",
        "netdid/app/simulation.py",
        "netdid/app/panel_io.py",
        "netdid/app/cli.py",
        "netdid/app/models.py",
        "netdid/requirements.txt",
    ]
    missing = [file for file in required_files if not Path(file).exists()]

    if missing:
        print(f"❌ Missing package files: {', '.join(missing)}")
        return False
    print("✅ Package structure complete")
    return True

def check_smoke_panel():
    """Generate a tiny panel and run one estimator end to end."""
    from netdid.app.dgp import generate_panel
    from netdid.app.estimators import estimate_all
    from netdid.app.models import SimConfig

    sim = generate_panel(SimConfig(n=60, area_side=6.0, L=4, seed=1))
    report = estimate_all(sim.panel, which=["proposed_dr_adtt"])["proposed_dr_adtt"]
    print(f"✅ Smoke panel: DR direct effect {report.point:.3f} (truth {sim.true_adtt})")
    return True

def check_output_directory():
    """Check the output directory is writable."""
    out = Path(os.getenv("NETDID_OUTPUT_DIR", "output"))
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        print(f"❌ Output directory not writable: {out}")
        return False
    print(f"✅ Output directory: {out}")
    return True

def main():
    print("=" * 60)
    print("Network DID - Setup Verification")
    print("=" * 60)
    print()

    checks = [
        ("Python Version", check_python_version),
        ("Package Structure", check_package_structure),
        ("Dependencies", check_dependencies),
        ("Output Directory", check_output_directory),
        ("Smoke Panel", check_smoke_panel),
    ]

    results = []
    for name, check_func in checks:
        print(f"Checking {name}...")
        try:
            result = check_func()
            results.append((name, result))
        except Exception as e:
            print(f"❌ Error checking {name}: {e}")
            results.append((name, False))
        print()

    print("=" * 60)
    print("Summary")
    print("=" * 60)

    all_passed = True
    for name, result in results:
        status = "✅ PASS" if result else "❌ FAIL"
        print(f"{status}: {name}")
        if not result:
            all_passed = False

    print()
    if all_passed:
        print("✅ All checks passed!")
        print()
        print("Next steps:")
        print("1. Unit tests: pytest -m \"not slow\"")
        print("2. Small run: python -m netdid.app.cli simulate --n 200 --replications 5")
        print("3. Full tables: python -m netdid.app.cli replicate --threads 4")
    else:
        print("❌ Some checks failed. Please fix the issues above.")
        print()
        print("Common fixes:")
        print("- Install deps: pip install -r netdid/requirements.txt")

    return 0 if all_passed else 1

if __name__ == "__main__":
    sys.exit(main())
