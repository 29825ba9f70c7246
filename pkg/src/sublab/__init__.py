"""sublab: numerical Riemannian submersions, bundle metrics of Cheeger-Gromoll type,
and Gromov-Hausdorff collapse experiments."""

__version__ = "0.1.0"
