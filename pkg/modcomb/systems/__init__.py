"""Ground-truth simulators, datasets and error metrics"""
