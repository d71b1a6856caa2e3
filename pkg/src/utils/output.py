from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd
from pydantic import BaseModel

#### output writers section ##################################################

def write_table(rows: Union[pd.DataFrame, List[Dict[str, Any]], Dict[str, Any]], path: Path) -> Path:
    """Write rows as CSV; column order follows the first row"""
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g")
    return path


def write_record(record: BaseModel, path: Path) -> Path:
    """Write a pydantic record as indented JSON"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.model_dump_json(indent=2))
    return path
