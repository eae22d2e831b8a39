"""
Spatial and temporal harmonization of gridded, municipal and survey data
into an area-by-year panel.

Submodules
----------
geomcore   planar geometry, gridded field snapshots, crosswalks
variogram  covariance families and weighted least-squares fitting
kriging    ordinary point and block kriging
tuning     cross-validated model selection and area alignment
temporal   unit conversion, derived meteorology, seasonal summaries
areal      crosswalk aggregation, class shares, snapshot schedules
survey     stratum reconstruction, weighting hierarchy, HT estimation
gvf        generalized variance functions and blending
panel      panel assembly, missing report and plausibility checks
"""

__version__ = "0.1.0"
