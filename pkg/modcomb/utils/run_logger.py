"""
Run Logger - Append-only JSONL trail of experiment runs
"""
import json
import os
from datetime import datetime
from typing import Dict, List, Optional

DEFAULT_LOG_DIR = 'data/run_logs'


def log_dir() -> str:
    return os.getenv('MODCOMB_LOG_DIR', DEFAULT_LOG_DIR)


def log_event(run_id: str, action: str, metadata: Optional[Dict] = None):
    """
    Log one run event (start, finish, failure, timing)

    Args:
        run_id: Identifier shared by all events of one run
        action: Event type (run_started, run_finished, run_failed, ...)
        metadata: Additional context, must be JSON-serializable
    """
    directory = log_dir()
    entry = {
        'timestamp': datetime.now().isoformat(),
        'run_id': run_id,
        'action': action,
        'metadata': metadata or {},
    }

    # One file per day
    date_str = datetime.now().strftime('%Y-%m-%d')
    log_file = os.path.join(directory, f'run_{date_str}.jsonl')

    try:
        os.makedirs(directory, exist_ok=True)
        with open(log_file, 'a', encoding='utf-8') as f:
            f.write(json.dumps(entry, default=str) + '\n')
    except OSError as e:
        print(f"Failed to log run event: {e}")


def get_run_history(run_id: str) -> List[Dict]:
    """
    Retrieve all logged events of a run, oldest first
    """
    directory = log_dir()
    history = []

    if not os.path.exists(directory):
        return history

    for filename in sorted(os.listdir(directory)):
        if filename.endswith('.jsonl'):
            filepath = os.path.join(directory, filename)
            try:
                with open(filepath, 'r', encoding='utf-8') as f:
                    for line in f:
                        if not line.strip():
                            continue
                        entry = json.loads(line)
                        if entry.get('run_id') == run_id:
                            history.append(entry)
            except (OSError, json.JSONDecodeError) as e:
                print(f"Failed to read log file {filename}: {e}")

    return sorted(history, key=lambda x: x['timestamp'])
