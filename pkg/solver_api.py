"""
Flask API endpoints for the game solver
GET  /api/solver/health
POST /api/solver/validate | /api/solver/table1 | /api/solver/certify | /api/solver/solve
"""

from flask import Blueprint, jsonify, request

from config import DEFAULT_PROBE, TABLE1_EPSILONS
from game_core import (GameModelError, InvalidModelError, LatticeError, compute_beta, require_valid, to_rational,
                       validate_model)
from nash_solver import (AbsorptionBoundError, certify, horizon_for, solve_best_response_dynamics,
                         solve_grid)
from policy_eval import PolicyShapeError, UndefinedBoundError
from schemas import CertifyRequest, GameFileError, SolveRequest, game_from_document, policy_to_document

__version__ = "1.0.0"

# Create blueprint for the API
solver_bp = Blueprint('solver', __name__)

# Failures of a well-formed request against the model itself
DOMAIN_ERRORS = (InvalidModelError, AbsorptionBoundError, PolicyShapeError, UndefinedBoundError, LatticeError)


def _json_body():
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        return None
    return data


@solver_bp.route('/api/solver/health', methods=['GET'])
def health_check():
    """Health check endpoint"""
    return jsonify({"status": "healthy", "version": __version__}), 200


@solver_bp.route('/api/solver/validate', methods=['POST'])
def validate():
    """Validate a game document and report beta and the divergence check"""
    try:
        data = _json_body()
        if data is None or 'model' not in data:
            return jsonify({"error": "Request body must be JSON with a 'model' document"}), 400
        try:
            model = game_from_document(data['model'])
        except GameFileError as e:
            return jsonify({"error": str(e), "path": e.path}), 400
        probe = data.get('probe', DEFAULT_PROBE)
        if isinstance(probe, bool) or not isinstance(probe, int) or probe < 1:
            return jsonify({"error": "probe must be an integer >= 1"}), 400
        return jsonify(validate_model(model, probe).to_dict()), 200
    except Exception as e:
        return jsonify({"error": f"Internal server error: {str(e)}"}), 500


@solver_bp.route('/api/solver/table1', methods=['POST'])
def table1():
    """Period lengths T(eps) for eps = 0.1 .. 1.0"""
    try:
        data = _json_body()
        if data is None:
            return jsonify({"error": "Request body must be JSON"}), 400
        try:
            if 'beta' in data:
                beta = to_rational(data['beta'])
            elif 'model' in data:
                beta = compute_beta(game_from_document(data['model']))
            else:
                return jsonify({"error": "beta or model is required"}), 400
        except (GameFileError, GameModelError) as e:
            return jsonify({"error": str(e)}), 400
        try:
            rows = [[eps, horizon_for(eps, beta)] for eps in TABLE1_EPSILONS]
        except UndefinedBoundError as e:
            return jsonify({"error": str(e)}), 422
        return jsonify({"beta": str(beta), "rows": rows}), 200
    except Exception as e:
        return jsonify({"error": f"Internal server error: {str(e)}"}), 500


@solver_bp.route('/api/solver/certify', methods=['POST'])
def certify_policy():
    """Certify a user policy at the requested epsilon"""
    try:
        data = _json_body()
        if data is None:
            return jsonify({"error": "Request body must be JSON"}), 400
        try:
            req = CertifyRequest.from_dict(data)
            require_valid(req.model)
            req.policy.check(req.model)
        except (InvalidModelError, PolicyShapeError) as e:
            return jsonify({"error": str(e)}), 422
        except ValueError as e:
            return jsonify({"error": str(e)}), 400
        try:
            cert = certify(req.model, req.policy, req.epsilon,
                           provenance={"source": "request", "iterations": 1, "seed": None})
        except DOMAIN_ERRORS as e:
            return jsonify({"error": str(e)}), 422
        return jsonify(cert.to_dict()), 200
    except Exception as e:
        return jsonify({"error": f"Internal server error: {str(e)}"}), 500


@solver_bp.route('/api/solver/solve', methods=['POST'])
def solve():
    """Search for a certified epsilon-Nash equilibrium"""
    try:
        data = _json_body()
        if data is None:
            return jsonify({"error": "Request body must be JSON"}), 400
        try:
            req = SolveRequest.from_dict(data)
        except ValueError as e:
            return jsonify({"error": str(e)}), 400
        try:
            if req.strategy == "brd":
                cert = solve_best_response_dynamics(req.model, req.initial_goals, req.epsilon, req.budget, req.seed)
            else:
                order = "deterministic" if req.strategy == "grid" else "seeded-random"
                cert = solve_grid(req.model, req.initial_goals, req.epsilon, req.budget, order=order, seed=req.seed)
        except DOMAIN_ERRORS as e:
            return jsonify({"error": str(e)}), 422
        result = cert.to_dict()
        result["policy"] = policy_to_document(cert.policy) if cert.policy is not None else None
        return jsonify(result), 200
    except Exception as e:
        return jsonify({"error": f"Internal server error: {str(e)}"}), 500
