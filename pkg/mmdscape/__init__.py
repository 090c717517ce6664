"""MMD loss landscapes and parameter recovery for small Gaussian families."""
