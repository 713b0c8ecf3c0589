#!/usr/bin/env python3
"""
Flask server exposing the game solver over HTTP
"""

from flask import Flask
from flask_cors import CORS

from config import SERVER_PORT
from solver_api import solver_bp


def create_app() -> Flask:
    app = Flask(__name__)
    CORS(app)  # Enable CORS for all routes
    app.register_blueprint(solver_bp)
    return app


app = create_app()


if __name__ == '__main__':
    print(f"[+] Solver API listening on port {SERVER_PORT}")
    app.run(host='0.0.0.0', port=SERVER_PORT, debug=False)
