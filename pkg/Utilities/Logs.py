import logging
import sys

_configured = False


def configure_logging(verbose: bool = False, stream=None) -> None:
    """Configures the root logger once. Messages carry their category prefix (e.g. TrainingNotification:) in the text itself."""
    global _configured
    level = logging.DEBUG if verbose else logging.INFO
    if _configured:
        logging.getLogger().setLevel(level)
        return
    handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
    handler.setFormatter(logging.Formatter('%(asctime)s %(name)s %(levelname)s %(message)s'))
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(level)
    _configured = True
