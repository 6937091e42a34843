from anl.util.case import camel_to_snake, keys_to_camel, keys_to_snake, snake_to_camel


def test_camel_to_snake():
    assert 'train_end' == camel_to_snake('trainEnd')
    assert 'enable_incremental_qr' == camel_to_snake('enableIncrementalQr')
    assert 'levels' == camel_to_snake('levels')


def test_snake_to_camel():
    assert 'checkpointEvery' == snake_to_camel('checkpoint_every')
    assert 'qDiag' == snake_to_camel('q_diag')


def test_nested_keys():
    obj = {'testWindows': [{'label': '2020', 'start': 'a'}], 'nKnots': 5}
    snake = keys_to_snake(obj)
    assert {'test_windows': [{'label': '2020', 'start': 'a'}], 'n_knots': 5} == snake
    assert obj == keys_to_camel(snake)
