import os
import shutil
import time
from typing import List, Optional

from config import config
from components.logger import get_logger

logger = get_logger(__name__)


def cleanup_uploads(upload_dir: str, ttl_hours: Optional[int] = None) -> List[str]:
    """
    Remove per-request upload directories (and stray files) older than the TTL.

    Args:
        upload_dir: Path to the uploads directory
        ttl_hours: Time-to-live in hours (default: config.UPLOAD_TTL_HOURS)

    Returns:
        List of removed paths
    """
    ttl_hours = config.UPLOAD_TTL_HOURS if ttl_hours is None else ttl_hours
    if not os.path.exists(upload_dir):
        logger.warning(f"Upload directory {upload_dir} does not exist")
        return []

    removed = []
    cutoff = time.time() - ttl_hours * 3600
    for name in sorted(os.listdir(upload_dir)):
        path = os.path.join(upload_dir, name)
        if os.path.getmtime(path) >= cutoff:
            continue
        try:
            if os.path.isdir(path):
                shutil.rmtree(path)
            else:
                os.remove(path)
            removed.append(path)
            logger.info(f"Removed old upload: {path}")
        except OSError as e:
            logger.error(f"Failed to remove {path}: {e}")
    return removed


def schedule_cleanup(upload_dir: str, ttl_hours: Optional[int] = None) -> None:
    """
    Run the upload cleanup once, at application startup.

    Args:
        upload_dir: Path to the uploads directory
        ttl_hours: Time-to-live in hours
    """
    logger.info(f"Running scheduled cleanup of uploads directory: {upload_dir}")
    removed = cleanup_uploads(upload_dir, ttl_hours)
    if removed:
        logger.info(f"Cleanup removed {len(removed)} uploads")
    else:
        logger.info("No uploads needed cleanup")
