"""Factorial regression and layer vulnerability measures."""
from .design import TERM_NAMES, TERMS, ModelSpec, build_design_matrix, design_row
from .heatmap import (HeatmapGrid, binary_entropy, layer_drop_probability, layer_entropy_score,
                      render_svg, save_heatmap)
from .ols import (OlsFit, coefficient_report, load_coefficients, ols_fit, predict, save_coefficients,
                  significance_mark)
