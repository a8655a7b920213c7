# Package init (intentionally empty). Modules:
# - utils.py: asset_path, worker_count, parallel_map, sorted_eigh
# - covmodel.py: SampleCov, FactorFit, SolverConfig, loss and diagonal primitives
# - matrixio.py: matrix CSV, returns CSV, JSON reports
# - bounds.py: rank bounds, identifiability, test-matrix generator
# - ranksel.py: BIC rank selection
