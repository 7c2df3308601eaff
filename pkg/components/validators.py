import os
from typing import Any, Optional

from config import config
from components.errors import ConfigurationError


def validate_upload(file: Any, content_length: Optional[int], field_name: str = 'file') -> None:
    """
    Validate a panel upload based on extension and size.

    Args:
        file: The uploaded file object (werkzeug FileStorage)
        content_length: Content length from request headers
        field_name: Form field the file came from, for the message

    Raises:
        ConfigurationError: If validation fails with specific error message
    """
    if not file or not file.filename:
        raise ConfigurationError(f'No file provided for {field_name}')

    ext = os.path.splitext(file.filename)[1].lower()
    if ext not in config.ALLOWED_EXT:
        raise ConfigurationError(f'Invalid file type for {field_name}: {ext}. '
                                 f'Allowed types: {", ".join(sorted(config.ALLOWED_EXT))}')

    if content_length and content_length > config.MAX_UPLOAD_SIZE:
        raise ConfigurationError(f'Upload too large. Maximum size: {config.MAX_UPLOAD_SIZE / (1024 * 1024):.1f} MB')
