"""Stand-in harness: hangs forever to exercise the timeout path."""
import time
time.sleep(3600)
