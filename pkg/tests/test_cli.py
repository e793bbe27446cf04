""" Tests for the command line front end"""
import numpy as np
import pytest

from mkdistance.cli import EXIT_DATA
from mkdistance.cli import EXIT_OK
from mkdistance.cli import EXIT_USAGE
from mkdistance.cli import main
from mkdistance.utils_for_testing import baker_images
from mkdistance.utils_for_testing import write_idx_images
from mkdistance.utils_for_testing import write_pgm
from mkdistance.utils_for_testing import write_synthetic_mnist


@pytest.fixture
def bakers(tmp_path):
    bakers, cafes = baker_images()
    write_pgm(tmp_path / 'bakers.pgm', bakers)
    write_pgm(tmp_path / 'cafes.pgm', cafes, plain=False)
    return str(tmp_path / 'bakers.pgm'), str(tmp_path / 'cafes.pgm')


def test_kantorovich_between_bakers_and_cafes(bakers, capsys):
    assert main(['distance', '--metric', 'kantorovich', '--no-normalize', *bakers]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'kantorovich: 15'
    assert 'status: optimal' in lines
    assert lines[-1] == 'certificate: passed'


def test_kantorovich_of_a_file_with_itself(bakers, capsys):
    assert main(['distance', '--metric', 'kantorovich', bakers[0], bakers[0]]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'kantorovich: 0'
    assert lines[-1] == 'certificate: passed'


def test_kantorovich_normalizes_by_default(bakers, capsys):
    assert main(['distance', '--metric', 'kantorovich', '--pivot-rule', 'bland', *bakers]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == 'kantorovich: 5'


def test_euclidean_between_pgm_files(tmp_path, capsys):
    write_pgm(tmp_path / 'a.pgm', np.array([[0, 0]]))
    write_pgm(tmp_path / 'b.pgm', np.array([[3, 4]]))
    assert main(['distance', '--metric', 'euclidean', '--no-normalize', str(tmp_path / 'a.pgm'),
                 str(tmp_path / 'b.pgm')]) == EXIT_OK
    assert capsys.readouterr().out == 'euclidean: 5\n'


def test_tangent_between_idx_entries(tmp_path, capsys):
    images = np.zeros((2, 28, 28))
    images[0, 10:14, 12] = 200
    images[1, 11:15, 13] = 200
    write_idx_images(tmp_path / 'images', images)
    path = str(tmp_path / 'images')
    assert main(['distance', '--metric', 'tangent', path, path, '--index-b', '1']) == EXIT_OK
    value = float(capsys.readouterr().out.split(':')[1])
    # disjoint strokes of four pixels at 0.25 each are sqrt(0.5) apart
    assert 0 < value <= 0.5 ** 0.5 + 1e-9


def test_blank_image_is_a_data_error(tmp_path, capsys):
    write_pgm(tmp_path / 'blank.pgm', np.zeros((3, 3)))
    write_pgm(tmp_path / 'dot.pgm', np.eye(3))
    assert main(['distance', '--metric', 'kantorovich', str(tmp_path / 'blank.pgm'),
                 str(tmp_path / 'dot.pgm')]) == EXIT_DATA
    assert 'mkdistance:' in capsys.readouterr().err


def test_missing_file_is_a_data_error(tmp_path):
    assert main(['distance', '--metric', 'euclidean', str(tmp_path / 'a.pgm'), str(tmp_path / 'b.pgm')]) == EXIT_DATA


@pytest.mark.parametrize("argv", [
    [],
    ['distance', '--metric', 'manhattan', 'a.pgm', 'b.pgm'],
    ['verify', '--instances', 'many'],
    ['experiment'],
])
def test_usage_errors_exit_with_one(argv, capsys):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == EXIT_USAGE
    assert 'usage: mkdistance' in capsys.readouterr().err


def test_verify(capsys):
    assert main(['verify', '--seed', '3', '--instances', '20', '--triples', '10']) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert all(line.startswith('PASS') for line in lines)


def test_experiment(tmp_path, capsys):
    paths = write_synthetic_mnist(tmp_path, train_per_digit=21, test_per_digit=1)
    config = tmp_path / 'experiment.cfg'
    config.write_text('\n'.join(f"{key} = {path}" for key, path in paths.items()) + """
distances = euclidean, kantorovich
training_sizes = 1, 5
num_training_sets = 1
test_size_per_digit = 1
pool_per_digit = 21
""")
    out = tmp_path / 'results'
    assert main(['experiment', '--config', str(config), '--out', str(out), '--seed', '2']) == EXIT_OK
    printed = capsys.readouterr().out
    assert printed.startswith('Number of training digits with accuracy (%)\n')
    assert 'Kantorovich' in printed
    assert (out / 'table1.txt').read_text() in printed
    assert (out / 'records.csv').exists()


def test_experiment_config_error(tmp_path, capsys):
    config = tmp_path / 'experiment.cfg'
    config.write_text('colour = blue\n')
    assert main(['experiment', '--config', str(config)]) == EXIT_USAGE
    assert 'configuration error' in capsys.readouterr().err
