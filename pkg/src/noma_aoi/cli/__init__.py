"""Typer CLI entrypoint.

Verbs:
- ``solve``: construct one policy at one configuration and report J*
- ``verify``: switching-structure and monotone-policy checks
- ``map``: policy-map CSVs for plotting
- ``sweep``: SNR sweep table across policy kinds
- ``simulate``: seeded slot-level simulation of one policy
"""

from __future__ import annotations

from typing import Annotated

import typer

from noma_aoi.cli.experiments import policy_map, sweep
from noma_aoi.cli.solve import simulate, solve, verify
from noma_aoi.utils.logging import configure_logging

app = typer.Typer(
    name="noma-aoi",
    help="AoI-optimal hybrid NOMA/OMA scheduling for a two-client downlink",
    add_completion=False,
    no_args_is_help=True,
    rich_markup_mode="rich",
)


@app.callback()
def main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log solver progress (DEBUG).")] = False,
) -> None:
    configure_logging(verbose)


app.command("solve")(solve)
app.command("verify")(verify)
app.command("map")(policy_map)
app.command("sweep")(sweep)
app.command("simulate")(simulate)

if __name__ == "__main__":
    app()
