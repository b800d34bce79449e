import click

from crepe.harness.cli import report, resume, run, smc, verify


@click.group()
def entry():
    """Control pretrained diffusion models at inference time"""


entry.add_command(run)
entry.add_command(smc)
entry.add_command(verify)
entry.add_command(resume)
entry.add_command(report)
