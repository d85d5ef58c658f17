//! Command-line front end: pretraining, online fine-tuning, evaluation, the
//! robust-versus-nonrobust comparison, episode playback and the environment
//! server.

pub mod cli;
pub mod commands;
pub mod plot;
pub mod series;

use anyhow::{bail, Result};

use crate::cli::{Cli, Command};
use crate::commands::Common;

pub fn run(cli: &Cli) -> Result<()> {
    let c = Common::from(cli);
    match (&cli.serve, &cli.command) {
        (Some(addr), None) => commands::cmd_serve(&c, addr),
        (Some(_), Some(_)) => bail!("--serve cannot be combined with a subcommand"),
        (None, None) => bail!("no command given; see --help"),
        (None, Some(cmd)) => match cmd {
            Command::Train(a) => commands::cmd_train(&c, a).map(drop),
            Command::Transfer(a) => commands::cmd_transfer(&c, a).map(drop),
            Command::Eval(a) => commands::cmd_eval(&c, a).map(drop),
            Command::Compare(a) => commands::cmd_compare(&c, a).map(drop),
            Command::Play(a) => commands::cmd_play(&c, a).map(drop),
        },
    }
}
