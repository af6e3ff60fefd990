"""Compliance-adjusted cost-effectiveness estimation for randomised trials."""

from ._core import (
    CaceEstimate,
    CeaResult,
    ConfigError,
    IdentificationError,
    IvceaError,
    PooledEstimate,
    PosteriorDraws,
    PositivityError,
    SchemaError,
    SeparationError,
    SingularError,
    TrialDataset,
    ValidationError,
    ceac,
    fit_bayes_iv,
    icer,
    inb,
    inb_from,
    inb_pooled,
    ipw_adherence,
    itt_sur,
    load_csv,
    mi_analysis,
    mi_impute,
    parse_csv,
    pp_sur,
    rubin_pool,
    run_mc,
    simulate,
    summarize_posterior,
    three_sls,
    tsls_pair,
    wald_cace,
)

__all__ = [name for name in dir() if not name.startswith("_")]
