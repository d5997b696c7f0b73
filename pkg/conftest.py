import sys
from pathlib import Path

# Allow running pytest from a fresh checkout without installing the package.
src = Path(__file__).parent / "src"
if str(src) not in sys.path:
    sys.path.insert(0, str(src))
