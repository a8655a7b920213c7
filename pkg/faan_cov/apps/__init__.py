# apps/__init__.py

# Applications built on the fitted covariance model
# - doa.py: array simulation, MUSIC and RMSE sweeps
# - portfolio.py: minimum-variance weights, rolling backtests, synthetic returns
# - scenario.py: scenario JSON configs with "default" merging
