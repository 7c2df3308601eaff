from flask import Flask, jsonify, request
import os
import uuid

from werkzeug.exceptions import RequestEntityTooLarge
from werkzeug.utils import secure_filename

# Import configuration and logging
from config import config
from components.logger import get_logger, setup_logging, LogCapture, INFO

from components.cleanup import schedule_cleanup
from components.dyadic_regression import dyad_frame_from_panel, dyadic_ols, regression_table
from components.errors import ConfigurationError, NetformError
from components.helpers import to_jsonable
from components.panel_io import load_panel
from components.run_config import package_version
from components.table_processor import table_records
from components.tau_estimator import estimate_tau, tau_distance_table
from components.validators import validate_upload

logger = get_logger()

app = Flask(__name__)
app.secret_key = config.SECRET_KEY or os.urandom(32)
app.config['UPLOAD_FOLDER'] = config.UPLOAD_FOLDER
app.config['MAX_CONTENT_LENGTH'] = config.MAX_UPLOAD_SIZE

if not os.path.exists(config.UPLOAD_FOLDER):
    os.makedirs(config.UPLOAD_FOLDER)
schedule_cleanup(config.UPLOAD_FOLDER)

UPLOAD_FIELDS = ('networks', 'covariates')


def save_uploads() -> str:
    """
    Validate and store the networks/covariates pair of a request.

    Returns:
        Per-request directory holding networks.csv and covariates.csv

    Raises:
        ConfigurationError: If a file is missing, has the wrong type or is too large
    """
    for field_name in UPLOAD_FIELDS:
        validate_upload(request.files.get(field_name), request.content_length, field_name)

    request_dir = os.path.join(app.config['UPLOAD_FOLDER'], str(uuid.uuid4()))
    os.makedirs(request_dir)
    for field_name in UPLOAD_FIELDS:
        upload = request.files[field_name]
        path = os.path.join(request_dir, f'{field_name}.csv')
        upload.save(path)
        logger.info(f"Saved upload {secure_filename(upload.filename)} as {path}")
    return request_dir


def load_uploaded_panel(request_dir: str):
    attributes = request.form.get('attributes')
    categorical = request.form.get('categorical')
    return load_panel(
        os.path.join(request_dir, 'networks.csv'),
        os.path.join(request_dir, 'covariates.csv'),
        attributes.split(',') if attributes else None,
        categorical.split(',') if categorical else None,
    )


@app.errorhandler(NetformError)
def handle_netform_error(e: NetformError):
    status = 400 if isinstance(e, (ConfigurationError, ValueError)) else 422
    logger.warning(f"Request failed ({e.category}): {e}")
    return jsonify({'error': str(e), 'category': e.category}), status


@app.errorhandler(RequestEntityTooLarge)
def handle_too_large(e):
    limit_mb = config.MAX_UPLOAD_SIZE / (1024 * 1024)
    return jsonify({'error': f'Upload too large. Maximum size: {limit_mb:.1f} MB', 'category': 'config'}), 413


@app.route('/api/info', methods=['GET'])
def info():
    """Version and available endpoints."""
    return jsonify({
        'name': 'netform-abc',
        'version': package_version(),
        'endpoints': ['/api/info', '/api/estimate-tau', '/api/regress'],
    })


@app.route('/api/estimate-tau', methods=['POST'])
def estimate_tau_endpoint():
    """Estimate the number of rounds from an uploaded panel."""
    request_dir = save_uploads()
    with LogCapture() as log_capture:
        panel = load_uploaded_panel(request_dir)
        estimate = estimate_tau(panel)
        distances = tau_distance_table(panel, estimate.tau_hat)
    return jsonify(to_jsonable({
        'estimate': estimate.to_dict(),
        'distances': table_records(distances),
        'logs': log_capture.getvalue().splitlines(),
    }))


@app.route('/api/regress', methods=['POST'])
def regress_endpoint():
    """Dyadic regression of follow-up links on pair covariates, clustered by classroom."""
    request_dir = save_uploads()
    fixed_effects = request.form.get('fixed_effects', 'true').lower() not in ('0', 'false', 'no')
    with LogCapture() as log_capture:
        panel = load_uploaded_panel(request_dir)
        fit = dyadic_ols(dyad_frame_from_panel(panel), list(panel.covariate_names),
                         include_fixed_effects=fixed_effects)
    return jsonify(to_jsonable({
        'fit': fit.to_dict(),
        'table': table_records(regression_table(fit)),
        'logs': log_capture.getvalue().splitlines(),
    }))


if __name__ == '__main__':
    setup_logging(level=INFO)
    app.run(debug=True)
