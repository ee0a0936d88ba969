"""Stand-in harness: always reports a crash at frame 10."""
import json
print(json.dumps({"compiled": True, "ran_frames": 10, "crashed": True,
                  "crash_message": "ZeroDivisionError: division by zero"}))
