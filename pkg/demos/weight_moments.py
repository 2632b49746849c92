"""
When Girsanov weights stop being well behaved
=============================================

For bounded drift every moment of Z^h_T is bounded in h. For b(x) = x the
second moment already explodes, which the diagnostic reports as a warning.
"""

from emweak import Grid, catalogue, weight_moment_diagnostic

grid = Grid.from_step(1.0, 2.0**-6)
for name, p in (("sign_drift", 4.0), ("holder_drift", 4.0), ("linear_drift", 2.0)):
    diag = weight_moment_diagnostic(catalogue.get_builtin(name).problem(), grid, p,
                                    schedule=(10_000, 100_000))
    moments = ", ".join(f"{r['moment']:.4g}" for r in diag.records)
    print(f"{name:13s} p={p:g}: [{moments}] stabilized={diag.stabilized}")
    if diag.warning:
        print("  warning:", diag.warning)
