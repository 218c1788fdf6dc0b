import sys
from pathlib import Path

# Make sibling helper modules (synth, scalar_oracle) importable when
# pytest is run from the repository root.
sys.path.insert(0, str(Path(__file__).parent))
