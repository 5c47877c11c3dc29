use nashplay_core::certified::certified_policy_tree_q;
use nashplay_core::eval::{exploitability_exact, nash_value_oracle};
use nashplay_core::game::{make_random_game, Side};
use nashplay_core::nash_q::{run_nash_q, RunOptions};
use nashplay_core::rng::RngStream;
use nashplay_core::schedules::{Hyperparams, IotaTotal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = RngStream::from_seed(7);
    let game = make_random_game(3, 3, 2, 2, &mut rng);
    let hp = Hyperparams::for_game(3, 3, 2, 2, 20_000, 2.0, 0.01, IotaTotal::EpisodesTimesHorizon);
    let hist = run_nash_q(&game, 20_000, &hp, &RunOptions::default(), &mut rng.split(0));

    let v_star = nash_value_oracle(&game).table.value(0, game.initial_state());
    let mu = certified_policy_tree_q(&hist, Side::Max, 200_000)?;
    let nu = certified_policy_tree_q(&hist, Side::Min, 200_000)?;
    let report = exploitability_exact(&game, &mu, &nu);
    println!("v* = {v_star:.4}, certified exploitability = {:.4}", report.exploitability);
    Ok(())
}
