from utils.custom_exception import CustomException, InputError, NumericalError
from utils.logger import get_logger

logger = get_logger(__name__)


def run_stage(stage: str, fn, *args, **kwargs):
    """Run one pipeline stage with start/finish logging.

    Input and numerical errors pass through unchanged; anything else is
    wrapped in ``CustomException`` naming the stage.
    """
    try:
        logger.info(f"Starting {stage}")
        result = fn(*args, **kwargs)
        logger.info(f"Finished {stage}")
        return result
    except (InputError, NumericalError) as e:
        logger.error(f"{stage} failed: {e}")
        raise
    except Exception as e:
        logger.error(f"Failed during {stage} {str(e)}")
        raise CustomException(f"Error during {stage}", e)
